import hashlib


def derive_seed(master_seed, stage, goal=""):
    """Stable 32-bit seed for one (stage, goal) pair of a run."""
    key = f"{master_seed}:{stage}:{goal}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "little")
