"""Kasami small-set spreading sequences and exact correlation tools.

The probe waveform is a bipolar Kasami small-set sequence of length
2^n - 1 for even LFSR degree n.  The small set is built from one fixed
m-sequence u and its decimation w by 2^(n/2) + 1:

    member 0:  u
    members 1..2^(n/2) - 1:  u XOR (cyclic shifts of w)

All pairwise periodic cross-correlations of distinct members take values
in {-1, -(2^(n/2) + 1), 2^(n/2) - 1}, e.g. {-1, -9, +7} for n = 6, which
bounds the normalized leakage between concurrently transmitted members
by (2^(n/2) + 1) / (2^n - 1).

Index ordering: index 0 is always the base m-sequence (flat power
spectrum away from DC).  The XOR members are indexed by descending
spectral uniformity (largest minimum of their periodic power spectrum
first, ties by construction shift), because members with near-null
spectral lines cannot sound the corresponding subcarriers.  Index 1 is
therefore the best companion for concurrent transmission with index 0.

Note on balance: the base m-sequence (index 0) has exactly one more -1
chip than +1 chips.  The XOR members are imbalanced by 2^(n/2) - 1 or
-(2^(n/2) + 1); a fully balanced small set does not exist (the member
imbalances are cross-correlation values of u and w, which are themselves
three-valued).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# One fixed primitive polynomial per supported even degree, so sequences
# are reproducible bit-for-bit across runs and implementations.  Bit i of
# the mask is the coefficient of x^i; the leading x^degree term is implied.
PRIMITIVE_POLYNOMIALS = {
    4: 0b0011,            # x^4 + x + 1
    6: 0b000011,          # x^6 + x + 1
    8: 0b00011101,        # x^8 + x^4 + x^3 + x^2 + 1
    10: 0b0000001001,     # x^10 + x^3 + 1
    12: 0b000001010011,   # x^12 + x^6 + x^4 + x + 1
}


@dataclass(frozen=True)
class PnSequence:
    """A bipolar pseudo-noise sequence: one member of a Kasami small set."""

    degree: int
    index: int
    chips: np.ndarray   # int8, values in {-1, +1}, length 2^degree - 1

    def __post_init__(self):
        object.__setattr__(self, "chips", np.asarray(self.chips, dtype=np.int8))
        if self.chips.ndim != 1 or len(self.chips) != 2**self.degree - 1:
            raise ValueError("chip vector length must be 2^degree - 1")
        if not np.all(np.abs(self.chips) == 1):
            raise ValueError("chips must be bipolar (-1 or +1)")

    def __len__(self):
        return len(self.chips)

    def __eq__(self, other):
        if not isinstance(other, PnSequence):
            return NotImplemented
        return (self.degree == other.degree and self.index == other.index
                and np.array_equal(self.chips, other.chips))


def small_set_size(degree: int) -> int:
    """Number of members in the Kasami small set for the given degree."""
    return 2 ** (degree // 2)


def _m_sequence_bits(degree: int) -> np.ndarray:
    """Full-period m-sequence bits (0/1) from the fixed primitive polynomial."""
    poly = PRIMITIVE_POLYNOMIALS[degree]
    taps = [j for j in range(degree) if (poly >> j) & 1]
    length = (1 << degree) - 1
    bits = np.empty(length + degree, dtype=np.uint8)
    bits[:degree] = 1   # any nonzero seed works; all-ones is the convention here
    for t in range(length):
        v = 0
        for j in taps:
            v ^= bits[t + j]
        bits[t + degree] = v
    return bits[:length]


def _small_set_bits(degree: int) -> list[np.ndarray]:
    """All small-set members (0/1 bits) in the documented index order."""
    length = (1 << degree) - 1
    u = _m_sequence_bits(degree)
    decimation = 2 ** (degree // 2) + 1
    w = u[(decimation * np.arange(length)) % length]
    xor_members = [u ^ np.roll(w, -j) for j in range(2 ** (degree // 2) - 1)]
    # order XOR members by descending worst spectral line so low indices
    # are the most broadband probes; shift index breaks exact ties
    def min_line(bits):
        chips = 1.0 - 2.0 * bits
        return float(np.min(np.abs(np.fft.fft(chips)) ** 2))
    order = sorted(range(len(xor_members)),
                   key=lambda j: (-min_line(xor_members[j]), j))
    return [u] + [xor_members[j] for j in order]


def generate_kasami(degree: int, index: int) -> PnSequence:
    """Return the index-th member of the Kasami small set of length 2^degree - 1.

    Raises ValueError for odd or unsupported degree and for an index
    outside [0, 2^(degree/2)).
    """
    if degree % 2 != 0 or degree < 4:
        raise ValueError(f"Kasami small set needs an even degree >= 4, got {degree}")
    if degree not in PRIMITIVE_POLYNOMIALS:
        raise ValueError(f"no primitive polynomial registered for degree {degree}")
    if not 0 <= index < small_set_size(degree):
        raise ValueError(
            f"index {index} outside small set [0, {small_set_size(degree)}) "
            f"for degree {degree}")
    bits = _small_set_bits(degree)[index]
    chips = (1 - 2 * bits.astype(np.int8)).astype(np.int8)   # 0 -> +1, 1 -> -1
    return PnSequence(degree=degree, index=index, chips=chips)


def periodic_correlation(a: PnSequence, b: PnSequence) -> np.ndarray:
    """Exact periodic cross-correlation: entry l is sum_t a[t] * b[(t+l) mod L].

    Integer arithmetic throughout; returns an int64 vector of length L.
    """
    if a.degree != b.degree or len(a) != len(b):
        raise ValueError("sequences must share degree and length")
    x = a.chips.astype(np.int64)
    y = b.chips.astype(np.int64)
    length = len(x)
    return np.array([np.dot(x, np.roll(y, -lag)) for lag in range(length)],
                    dtype=np.int64)


def cross_correlation_values(degree: int) -> tuple[int, int, int]:
    """The three admissible cross-correlation values for the small set."""
    t = 2 ** (degree // 2)
    return (-1, -(t + 1), t - 1)


def write_chips_csv(seq: PnSequence, path) -> None:
    """Export a sequence as CSV, one chip per line, for cross-tool comparison."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kasami degree={seq.degree} index={seq.index} "
                 f"poly=0x{PRIMITIVE_POLYNOMIALS[seq.degree]:x}\n")
        fh.write("chip\n")
        for c in seq.chips:
            fh.write(f"{int(c)}\n")


def read_chips_csv(path) -> np.ndarray:
    """Read back a chip CSV written by :func:`write_chips_csv`."""
    chips = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line == "chip":
                continue
            chips.append(int(line))
    return np.asarray(chips, dtype=np.int8)
