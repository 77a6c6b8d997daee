"""Counter-based random streams.

Every trial owns four independent Philox streams (segment lengths, context
draws, arm sampling, noise).  Philox is counter based, so a stream is fully
determined by ``(seed, name)`` and the number of values consumed so far; the
same seed replays the same sequence on any host and in any process.
"""

import hashlib

import numpy as np

STREAM_NAMES = ("segments", "contexts", "arms", "noise")

_CHUNK = 1 << 16


def derive_seed(*parts):
    """Stable 64-bit seed from arbitrary printable parts.

    Python's ``hash`` is salted per process, so a cryptographic digest is used
    instead; the result is identical on every platform.
    """
    text = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class Stream:
    """Sequential view over one Philox stream with look-ahead.

    ``peek(n)`` exposes the next ``n`` uniforms without consuming them and
    ``advance(k)`` consumes ``k`` of them.  Kernels work on peeked blocks and
    report how much they used, which keeps the stream position exact.
    """

    def __init__(self, seed, name):
        self.seed = int(seed)
        self.name = name
        key = derive_seed("pslb-stream", self.seed, name)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self._buf = np.empty(0)
        self._off = 0
        self.position = 0

    def _fill(self, n):
        have = self._buf.size - self._off
        if have >= n:
            return
        need = max(n - have, _CHUNK)
        fresh = self._gen.random(need)
        self._buf = np.concatenate([self._buf[self._off:], fresh])
        self._off = 0

    def peek(self, n):
        self._fill(n)
        return self._buf[self._off:self._off + n]

    def advance(self, k):
        if k < 0 or k > self._buf.size - self._off:
            raise ValueError(f"cannot advance stream {self.name!r} by {k}")
        self._off += k
        self.position += k

    def take(self, n):
        out = self.peek(n).copy()
        self.advance(n)
        return out

    def random(self):
        """One uniform draw in [0, 1)."""
        return float(self.take(1)[0])


def make_streams(seed):
    return {name: Stream(seed, name) for name in STREAM_NAMES}
