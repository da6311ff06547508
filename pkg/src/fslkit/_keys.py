"""Fixed public AES keys shared by both kernel backends."""
import hashlib

PRG_KEY = hashlib.sha256(b"fslkit/prg/v1").digest()[:16]
CONVERT_KEY = hashlib.sha256(b"fslkit/convert/v1").digest()[:16]
SEED_BYTES = 16
