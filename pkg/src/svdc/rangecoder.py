"""Byte-oriented range coder with 32-bit range and carry propagation.

Encoder state is ``low`` (33 bits incl. carry), ``range`` (32 bits), one cached
output byte and a count of pending 0xFF bytes. Renormalisation shifts out a
byte whenever ``range < 2**24``. The leading byte of an LZMA-style stream is
always zero and is not written; the decoder starts with four bytes of code.

The flush writes the shortest prefix of a value inside the final interval. The
decoder therefore reads up to ``MAX_PAD`` zero bytes past the end of the
payload; needing more than that means the stream was truncated.
"""

from __future__ import annotations

TOP = 1 << 24
MASK32 = 0xFFFFFFFF
MAX_PAD = 4


class RangeCoderError(ValueError):
    pass


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self._cache = 0
        self._pending = 1
        self._skip_first = True
        self._out = bytearray()

    def _emit(self, byte):
        if self._skip_first:
            self._skip_first = False
            return
        self._out.append(byte)

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            byte = self._cache
            while True:
                self._emit((byte + carry) & 0xFF)
                byte = 0xFF
                self._pending -= 1
                if self._pending == 0:
                    break
            self._cache = (low >> 24) & 0xFF
        self._pending += 1
        self.low = (low << 8) & MASK32

    def encode(self, cum: int, freq: int, total: int) -> None:
        """Narrow the interval to ``[cum, cum + freq) / total``; ``total <= 2**16``."""
        r = self.range // total
        self.low += r * cum
        self.range = r * freq
        while self.range < TOP:
            self.range <<= 8
            self._shift_low()

    def encode_raw16(self, value: int) -> None:
        self.encode(value & 0xFFFF, 1, 1 << 16)

    def finish(self) -> bytes:
        # a multiple of 2**24 inside [low, low + range) exists because range >= 2**24
        self.low = (self.low + TOP - 1) & ~(TOP - 1)
        self._shift_low()
        self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self.range = MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()
        self._r = 0

    def _next_byte(self) -> int:
        pos = self._pos
        self._pos += 1
        if pos < len(self._data):
            return self._data[pos]
        if pos >= len(self._data) + MAX_PAD:
            raise RangeCoderError("range-coded stream is truncated")
        return 0

    def target(self, total: int) -> int:
        """Cumulative frequency the next symbol covers; call :meth:`consume` next."""
        self._r = self.range // total
        value = self.code // self._r
        if value >= total:
            raise RangeCoderError("corrupt range-coded stream")
        return value

    def consume(self, cum: int, freq: int) -> None:
        self.code -= self._r * cum
        self.range = self._r * freq
        while self.range < TOP:
            self.code = ((self.code << 8) | self._next_byte()) & MASK32
            self.range <<= 8

    def decode_raw16(self) -> int:
        value = self.target(1 << 16)
        self.consume(value, 1)
        return value

    @property
    def bytes_consumed(self) -> int:
        return self._pos
