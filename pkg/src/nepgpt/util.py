"""Small shared helpers: checksums and binary container plumbing."""

import hashlib
import struct


def checksum64(data: bytes) -> int:
    """64-bit content checksum used by all binary file formats."""
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def config_hash(items: dict) -> str:
    """Stable hex hash over resolved key=value pairs (sorted by key)."""
    blob = "\n".join(f"{k}={items[k]}" for k in sorted(items)).encode("utf-8")
    return hashlib.blake2b(blob, digest_size=16).hexdigest()


def write_str(buf: bytearray, s: str) -> None:
    raw = s.encode("utf-8")
    buf += struct.pack("<I", len(raw))
    buf += raw


class Reader:
    """Cursor over a bytes buffer with bounds checking."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("unexpected end of buffer")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        n = self.u32()
        return self.take(n).decode("utf-8")
