"""Platform-wide tunables."""

from __future__ import annotations

import os

KIB = 1024
MIB = 1024 * KIB
GIB = 1024 * MIB

# Storage layout
SWAP_TARGET_BYTES = 1 * GIB
SMALL_DISK_THRESHOLD = 2 * GIB
ALIGNMENT_BYTES = 1 * MIB
MFS_MOUNTPOINT = "/dist"
MFS_CAPACITY_BYTES = 256 * MIB
RAMDISK_TMP_CAPACITY_BYTES = 4 * MIB

# Directories copied into the evanescent root and redirected there
SYSTEM_DIRS = ("/etc", "/dev", "/bin", "/sbin", "/usr", "/var")

# Where things live on each medium kind
IMAGE_RAMDISK_DIR = "/ramdisk"
IMAGE_VERIFIER_DIR = "/verifier"
IMAGE_CONFIG_DIR = "/config"
IMAGE_MOUNTPOINT = "/cdrom"
FLOPPY_MOUNTPOINT = "/floppy"
VERIFIER_TOOL = "/verifier/bin/verify"
IMAGE_PACKAGE_DIRS = ("/packages/base", "/packages/ports", "/packages/lockss")
FLOPPY_PACKAGE_DIR = "/"
DISK_CONTENT_DIR = "/content"
CACHE_DIR = "/content/cache"
DISKLABEL_PATH = "/.disklabel"

CONFIG_FILE = "config.txt"
KEYRING_FILE = "keyring"
HOSTKEY_FILE = "hostkey"
REQUIRED_FILE = "required"
REVOCATION_CACHE_FILE = "revocations"

# Daemon supervision
WATCHDOG_DEADLINE_S = 30.0
HEARTBEAT_INTERVAL_S = 10.0
DAEMON_BINARY = "/lockss/bin/daemon"
DAEMON_CONFIG_FILES = ("/etc/lockss/daemon.conf",)

# Boot-time operator interaction
FLOPPY_POLL_INTERVAL_S = 5.0
FLOPPY_MAX_POLLS = 1000
DNS_PROBE_NAME = "update.lockss.example"

# Update channel
UPDATE_INTERVAL_S = 24 * 3600.0
UPDATE_JITTER_FRACTION = 0.10

# Signatures
DEFAULT_DIGEST_ALGORITHM = "sha256"

# Boot cost model calibrated against the 400 MHz reference machine:
# 320 s reset-to-login, of which 30 s signatures, 25 s base, 180 s for 96 MB.
CALIBRATED_FIXED_OVERHEAD_S = 85.0
CALIBRATED_SIGNATURE_CHECK_S = 30.0
CALIBRATED_BASE_INSTALL_S = 25.0
CALIBRATED_PACKAGE_BYTES = 96_000_000
CALIBRATED_PACKAGE_RATE = CALIBRATED_PACKAGE_BYTES / 180.0

# Admin response delay, lognormal in hours. mu = ln(48) - 1.751 * sigma puts
# 96% of the mass below 48 h.
FIREDRILL_RESPONSE_SIGMA = 1.0
FIREDRILL_RESPONSE_MU = 3.8712 - 1.7507 * FIREDRILL_RESPONSE_SIGMA
SPONTANEOUS_REBOOT_MEAN_H = 60 * 24.0

# HTTP mirror server
MIRROR_DIR = os.environ.get("APPLIANCE_MIRROR_DIR", "mirror")
HISTORY_DB = os.environ.get("APPLIANCE_HISTORY_DB", "history.db")
SERVE_HOST = "0.0.0.0"
SERVE_PORT = 8000
