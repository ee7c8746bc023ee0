"""Command-line entry point for the appliance toolkit.

Every subcommand prints plain, deterministic text on stdout. Failures print
one ``error code=<code> message=<text>`` line on stderr and exit 1.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

from .boot.config import parse_config_text, render_config
from .boot.machine import ANSWERS_FILE, load_machine, save_machine
from .boot.operator import PARTITION_KEY, InteractiveOperator, ScriptedOperator, parse_answers
from .boot.phases import boot_machine
from .boot.runtime import ApplianceRuntime, fetch_updates
from .boot.trace import verify_trace
from .boot.wizard import run_config_wizard
from .errors import ApplianceError, ConfigError, FormatError, InvalidInterval, NotFound
from .fleet.costs import STAGES, BootCostModel, availability, boot_stages
from .fleet.firedrill import simulate_firedrill
from .fleet.scenario import load_scenario
from .media.medium import MediumKind, VirtualMedium, load_medium, save_medium
from .packages.manifest import PackageArtifact, PackageCategory, split_package_filename
from .release.desk import make_machine, make_network, make_release, patch_bundle
from .release.image import build_image
from .release.publish import Mailer, extract_and_sign_package, publish_and_notify, read_bundle, write_bundle
from .settings import CONFIG_FILE, DEFAULT_DIGEST_ALGORITHM, IMAGE_CONFIG_DIR, KEYRING_FILE, SERVE_HOST, SERVE_PORT
from .simnet import SimNetwork
from .trust.keys import (
    Keyring,
    TrustedKey,
    generate_keypair,
    parse_keyring,
    parse_secret,
    render_keyring,
    render_secret,
)
from .trust.signatures import parse_signature, render_signature, sign_payload, signature_filename, verify_signature
from .updates.fetcher import UpdateCache
from .updates.mirrors import MirrorSet, register_mirror_dir, save_mirror_dir

logger = logging.getLogger(__name__)

_DURATION_RE = re.compile(r"([0-9]+(?:\.[0-9]+)?)([smhd]?)")
_UNIT_SECONDS = {"": 1.0, "s": 1.0, "m": 60.0, "h": 3600.0, "d": 86400.0}


def parse_duration(value: str) -> float:
    """``60d``, ``36h``, ``90m``, ``320s`` or bare seconds."""
    match = _DURATION_RE.fullmatch(value.strip())
    if match is None:
        raise InvalidInterval(f"not a duration: {value!r}")
    return float(match.group(1)) * _UNIT_SECONDS[match.group(2)]


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise NotFound(f"{path}: {e.strerror}") from None


# ---------------------------------------------------------------------------
# trust
# ---------------------------------------------------------------------------
def cmd_keygen(args: argparse.Namespace) -> int:
    public, secret = generate_keypair(args.key_id, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{args.key_id}.secret").write_text(render_secret(secret))
    (out / f"{args.key_id}.pub").write_text(render_keyring(Keyring([public])))
    print(f"key={public.key_id} fingerprint={public.fingerprint}")
    return 0


def cmd_sign(args: argparse.Namespace) -> int:
    payload = _read(args.file)
    written = []
    for key_file in args.key:
        secret = parse_secret(_read(key_file).decode())
        sig = sign_payload(payload, secret, args.algorithm)
        target = Path(args.file).with_name(signature_filename(Path(args.file).name, secret.key_id))
        target.write_bytes(render_signature(sig))
        written.append(target)
    for target in written:
        print(f"signature={target}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    keyring = parse_keyring(_read(args.keyring).decode(), origin_medium=args.keyring)
    result = verify_signature(_read(args.file), parse_signature(_read(args.signature)), keyring)
    print(str(result))
    return 0 if result.is_valid else 1


# ---------------------------------------------------------------------------
# release
# ---------------------------------------------------------------------------
def _artifacts(paths: list[str], category: PackageCategory) -> list[PackageArtifact]:
    artifacts = []
    for path in paths:
        parts = split_package_filename(Path(path).name)
        if parts is None:
            raise FormatError(f"{path} is not named <name>-<version>.pkg")
        artifacts.append(PackageArtifact(parts[0], parts[1], _read(path), category=category))
    return artifacts


def cmd_build_image(args: argparse.Namespace) -> int:
    secrets = [parse_secret(_read(k).decode()) for k in args.key]
    if args.keyring:
        keyring = parse_keyring(_read(args.keyring).decode())
    else:
        keyring = Keyring()
        for secret in secrets:
            keyring.add(TrustedKey(secret.key_id, secret.public_material))
    packages = _artifacts(args.port, PackageCategory.port) + _artifacts(args.app, PackageCategory.application)
    image = build_image(
        packages,
        _artifacts(args.base, PackageCategory.base),
        keyring,
        secrets,
        image_id=args.image_id,
        config_defaults=_read(args.config_defaults).decode() if args.config_defaults else "",
        algorithm=args.algorithm,
    )
    save_medium(image, Path(args.out))
    print(f"image={image.medium_id} files={len(image.tree)} hash={image.tree_hash()}")
    return 0


def cmd_extract_sign(args: argparse.Namespace) -> int:
    image = load_medium(Path(args.image))
    secrets = [parse_secret(_read(k).decode()) for k in args.key]
    release = extract_and_sign_package(image, args.name, secrets, args.algorithm)
    bundle = release.bundle()
    write_bundle(bundle, Path(args.out))
    for name in sorted(bundle):
        print(f"file={name}")
    for warning in release.warnings:
        print(f"warning {warning}")
    return 0


def cmd_publish(args: argparse.Namespace) -> int:
    bundle = read_bundle(Path(args.bundle))
    network = SimNetwork()
    endpoints = [register_mirror_dir(network, Path(d)) for d in args.mirror]
    mailer = Mailer()
    report = publish_and_notify(
        MirrorSet(tuple(e.endpoint_id for e in endpoints), args.seed), bundle, args.site, mailer, network,
    )
    for endpoint, directory in zip(endpoints, args.mirror):
        if endpoint.endpoint_id in report.published:
            save_mirror_dir(endpoint, Path(directory))
    for mirror in report.published:
        print(f"published mirror={mirror}")
    for mirror in report.unreachable:
        print(f"unreachable mirror={mirror}")
    for notification in mailer.outbox:
        print(notification.render(), end="")
    return 0


# ---------------------------------------------------------------------------
# machines
# ---------------------------------------------------------------------------
def cmd_make_fixture(args: argparse.Namespace) -> int:
    mirrors = [f"mirror{i}" for i in range(args.mirrors)]
    release = make_release(seed=args.seed, signers=args.signers)
    network = make_network(mirrors, revoked=args.revoke)
    machine = make_machine(
        release, network, mirrors, machine_id=args.machine_id, seed=args.seed, configured=not args.unconfigured,
    )
    if args.patch:
        bundle = patch_bundle(release, args.patch, tampered=args.tampered)
        if args.on_mirrors:
            for mirror in mirrors:
                network.endpoint(mirror).files.update(bundle)
        else:
            cache = UpdateCache(machine.first_disk)
            for name, data in sorted(bundle.items()):
                cache.put(name, data)
    save_machine(machine, Path(args.machine_dir))
    answers = f"{PARTITION_KEY}=yes\n"
    if args.answers:
        answers += _read(args.answers).decode()
    (Path(args.machine_dir) / ANSWERS_FILE).write_text(answers)
    print(f"machine={machine.machine_id} dir={args.machine_dir}")
    return 0


def _load(args: argparse.Namespace, operator=None):
    machine = load_machine(Path(args.machine_dir), operator)
    if args.seed is not None:
        machine.seed = args.seed
    return machine


def cmd_boot(args: argparse.Namespace) -> int:
    machine = _load(args)
    for _ in range(args.epochs):
        report = boot_machine(machine)
        print(report.render(), end="")
        if args.run_hours:
            runtime = ApplianceRuntime(machine).run(args.run_hours * 3600.0)
            print(
                f"runtime heartbeats={runtime.heartbeats} updates={runtime.update_checks} "
                f"fetched={runtime.fetched_files} watchdog_reboots={runtime.watchdog_reboots}"
            )
    violations = verify_trace(machine.log.get_all_events())
    for violation in violations:
        print(f"violation {violation.render()}")
    save_machine(machine, Path(args.machine_dir))
    if violations:
        print(f"error code=TraceViolation message={len(violations)} trace violations", file=sys.stderr)
        return 1
    return 0


def cmd_configure(args: argparse.Namespace) -> int:
    if args.answers:
        operator = ScriptedOperator(parse_answers(_read(args.answers).decode()))
    else:
        operator = InteractiveOperator()
    machine = _load(args, operator)
    if machine.boot_image is None:
        raise NotFound("machine has no boot image to take the keyring template from")
    template = parse_keyring(machine.boot_image.read(f"{IMAGE_CONFIG_DIR}/{KEYRING_FILE}").decode())
    if machine.floppy is None:
        machine.floppy = VirtualMedium("floppy0", MediumKind.config_floppy, present=False)
    config = run_config_wizard(operator, machine.iface, machine.floppy, template, machine.log, machine.seed)
    save_machine(machine, Path(args.machine_dir))
    print(render_config(config), end="")
    return 0


def cmd_fetch_updates(args: argparse.Namespace) -> int:
    machine = _load(args)
    floppy = machine.floppy
    if floppy is None or not floppy.present or not floppy.exists("/" + CONFIG_FILE):
        raise ConfigError("machine is not configured; run configure first")
    address = parse_config_text(floppy.read("/" + CONFIG_FILE).decode())["IP_ADDRESS"]
    report = fetch_updates(machine, address)
    save_machine(machine, Path(args.machine_dir))
    if report is None:
        print("fetch skipped")
        return 0
    print(f"mirror={report.mirror} reachable={str(report.reachable).lower()} fetched={report.files}")
    for name in report.fetched:
        print(f"fetched {name}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    machine = _load(args)
    for record in reversed(machine.history.get_history(machine.machine_id, args.limit)):
        print(
            f"epoch={record['epoch']} phase={record['phase']} total_s={record['total_s']:.3f} "
            f"plan={record['plan']}"
        )
        for warning in record["warnings"]:
            print(f"  warning {warning}")
    log_file = Path(args.machine_dir) / "boot.log"
    if args.log and log_file.is_file():
        lines = log_file.read_text().splitlines()
        for line in lines[-args.log:]:
            print(line)
    return 0


# ---------------------------------------------------------------------------
# fleet
# ---------------------------------------------------------------------------
def cmd_firedrill(args: argparse.Namespace) -> int:
    scenario = load_scenario(Path(args.scenario), seed=args.seed)
    result = simulate_firedrill(scenario)
    if args.trace:
        Path(args.trace).write_text(result.render_trace())
    print(result.curve.render(), end="")
    summary = result.summary()
    print(f"# fraction@48h={result.curve.fraction_at(48.0):.4f} upgraded={summary['upgraded']} "
          f"reverted={summary['reverted']}")
    return 0


def cmd_availability(args: argparse.Namespace) -> int:
    result = availability(parse_duration(args.interval), parse_duration(args.boot_seconds))
    print(result.format_percent(args.digits))
    return 0


def cmd_boot_time(args: argparse.Namespace) -> int:
    stages = boot_stages(BootCostModel.calibrated(), args.bytes)
    for stage in STAGES:
        print(f"{stage}={stages[stage]:.3f}")
    print(f"total_s={sum(stages.values()):.3f}")
    return 0


def cmd_serve_mirror(args: argparse.Namespace) -> int:
    import uvicorn

    from .app import create_app

    uvicorn.run(create_app(args.mirror_dir, args.history), host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    """Reports usage mistakes on the same single error line as every other failure."""

    def error(self, message: str):
        message = message.replace("\n", " ")
        print(f"error code=UsageError message={self.prog}: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="appliance", description="Secure network appliance toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    parser.add_argument("--seed", type=int, default=None, help="seed for every stochastic component")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="derive a signing keypair")
    p.add_argument("key_id")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("sign", help="write detached signatures for a file")
    p.add_argument("file")
    p.add_argument("--key", action="append", required=True, help="secret key file (repeatable)")
    p.add_argument("--algorithm", default=DEFAULT_DIGEST_ALGORITHM)
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("verify", help="check a detached signature against a keyring")
    p.add_argument("file")
    p.add_argument("signature")
    p.add_argument("--keyring", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("build-image", help="build a signed boot image")
    p.add_argument("out")
    p.add_argument("--base", action="append", default=[], help="base package file (repeatable)")
    p.add_argument("--port", action="append", default=[], help="port package file (repeatable)")
    p.add_argument("--app", action="append", default=[], help="application package file (repeatable)")
    p.add_argument("--key", action="append", default=[], help="secret key file (repeatable)")
    p.add_argument("--keyring", help="keyring template; defaults to the signing keys")
    p.add_argument("--config-defaults", help="config.txt defaults to ship on the image")
    p.add_argument("--image-id", default="cd0")
    p.add_argument("--algorithm", default=DEFAULT_DIGEST_ALGORITHM)
    p.set_defaults(func=cmd_build_image)

    p = sub.add_parser("extract-sign", help="extract a package from an image and sign it")
    p.add_argument("image")
    p.add_argument("name")
    p.add_argument("--key", action="append", default=[], help="secret key file (repeatable)")
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--algorithm", default=DEFAULT_DIGEST_ALGORITHM)
    p.set_defaults(func=cmd_extract_sign)

    p = sub.add_parser("publish", help="upload a bundle to mirror directories and notify sites")
    p.add_argument("bundle")
    p.add_argument("--mirror", action="append", required=True, help="mirror directory (repeatable)")
    p.add_argument("--site", action="append", default=[], help="site to notify (repeatable)")
    p.set_defaults(func=cmd_publish)

    p = sub.add_parser("make-fixture", help="write a desk-scale machine directory")
    p.add_argument("machine_dir")
    p.add_argument("--machine-id", default="appliance0")
    p.add_argument("--mirrors", type=int, default=3)
    p.add_argument("--signers", type=int, default=2, choices=(1, 2))
    p.add_argument("--revoke", action="append", default=[], help="key id the revocation source lists")
    p.add_argument("--patch", help="daemon version of a signed patch to add")
    p.add_argument("--tampered", action="store_true", help="corrupt the patch payload after signing")
    p.add_argument("--on-mirrors", action="store_true", help="put the patch on the mirrors, not in the cache")
    p.add_argument("--unconfigured", action="store_true", help="leave config.txt off the floppy")
    p.add_argument("--answers", help="extra scripted console answers (KEY=VALUE)")
    p.set_defaults(func=cmd_make_fixture)

    p = sub.add_parser("boot", help="boot a machine directory")
    p.add_argument("machine_dir")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--run-hours", type=float, default=0.0, help="simulated hours of runtime after each boot")
    p.set_defaults(func=cmd_boot)

    p = sub.add_parser("configure", help="run the configuration wizard")
    p.add_argument("machine_dir")
    p.add_argument("--answers", help="KEY=VALUE answers file instead of the console")
    p.set_defaults(func=cmd_configure)

    p = sub.add_parser("fetch-updates", help="run one update check")
    p.add_argument("machine_dir")
    p.set_defaults(func=cmd_fetch_updates)

    p = sub.add_parser("inspect", help="show boot history and log")
    p.add_argument("machine_dir")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--log", type=int, default=0, help="also print the last N boot log lines")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("firedrill", help="simulate a patch rollout")
    p.add_argument("scenario")
    p.add_argument("--trace", help="write the event trace here")
    p.set_defaults(func=cmd_firedrill)

    p = sub.add_parser("availability", help="downtime fraction for a reboot interval")
    p.add_argument("--interval", required=True, help="e.g. 60d")
    p.add_argument("--boot-seconds", required=True)
    p.add_argument("--digits", type=int, default=5)
    p.set_defaults(func=cmd_availability)

    p = sub.add_parser("boot-time", help="boot time from the calibrated cost model")
    p.add_argument("--bytes", type=int, required=True)
    p.set_defaults(func=cmd_boot_time)

    p = sub.add_parser("serve-mirror", help="serve a mirror directory over HTTP")
    p.add_argument("mirror_dir")
    p.add_argument("--history", default=None, help="boot history database to expose")
    p.add_argument("--host", default=SERVE_HOST)
    p.add_argument("--port", type=int, default=SERVE_PORT)
    p.set_defaults(func=cmd_serve_mirror)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")
    if args.seed is None and args.command in ("keygen", "make-fixture", "publish"):
        args.seed = 0
    try:
        return args.func(args)
    except ApplianceError as e:
        message = str(e).replace("\n", " ")
        print(f"error code={e.code} message={message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
