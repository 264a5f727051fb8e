"""S2 cell ids: cube-face projection plus Hilbert-curve ordering.

Bit layout of a 64-bit id: 3 face bits, then two bits per level (up to 30),
then a single sentinel bit; everything below the sentinel is zero. This
mirrors the reference C++ library closely enough to be bit-identical,
including its tie-breaking in face selection and its round-half-even in the
s/t to i/j discretisation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

MAX_LEVEL = 30
POS_BITS = 2 * MAX_LEVEL + 1
MAX_SIZE = 1 << MAX_LEVEL
_MASK64 = (1 << 64) - 1

SWAP_MASK = 0x01
INVERT_MASK = 0x02

# indexed by orientation, then by (i_bit << 1 | j_bit) or by Hilbert position
IJ_TO_POS = ((0, 1, 3, 2), (0, 3, 1, 2), (2, 3, 1, 0), (2, 1, 3, 0))
POS_TO_IJ = ((0, 1, 3, 2), (0, 2, 3, 1), (3, 2, 0, 1), (3, 1, 0, 2))
POS_TO_ORIENTATION = (SWAP_MASK, 0, 0, INVERT_MASK | SWAP_MASK)


def _latlng_to_xyz(lat_deg: float, lng_deg: float) -> tuple[float, float, float]:
    phi = math.radians(lat_deg)
    theta = math.radians(lng_deg)
    cos_phi = math.cos(phi)
    return (math.cos(theta) * cos_phi, math.sin(theta) * cos_phi, math.sin(phi))


def _largest_abs_component(p: tuple[float, float, float]) -> int:
    ax, ay, az = abs(p[0]), abs(p[1]), abs(p[2])
    if ax > ay:
        return 0 if ax > az else 2
    return 1 if ay > az else 2


def xyz_to_face_uv(p: tuple[float, float, float]) -> tuple[int, float, float]:
    face = _largest_abs_component(p)
    if p[face] < 0:
        face += 3
    x, y, z = p
    if face == 0:
        u, v = y / x, z / x
    elif face == 1:
        u, v = -x / y, z / y
    elif face == 2:
        u, v = -x / z, -y / z
    elif face == 3:
        u, v = z / x, y / x
    elif face == 4:
        u, v = z / y, -x / y
    else:
        u, v = -y / z, -x / z
    return face, u, v


def uv_to_st(u: float) -> float:
    if u >= 0:
        return 0.5 * math.sqrt(1 + 3 * u)
    return 1 - 0.5 * math.sqrt(1 - 3 * u)


def st_to_uv(s: float) -> float:
    if s >= 0.5:
        return (1.0 / 3.0) * (4 * s * s - 1)
    return (1.0 / 3.0) * (1 - 4 * (1 - s) * (1 - s))


def st_to_ij(s: float) -> int:
    # round() is half-to-even, matching lrint in the reference library
    return max(0, min(MAX_SIZE - 1, round(MAX_SIZE * s - 0.5)))


def lsb_for_level(level: int) -> int:
    return 1 << (2 * (MAX_LEVEL - level))


def _from_face_ij(face: int, i: int, j: int) -> int:
    n = face << POS_BITS
    orientation = face & SWAP_MASK
    for k in range(MAX_LEVEL - 1, -1, -1):
        ij = (((i >> k) & 1) << 1) | ((j >> k) & 1)
        pos = IJ_TO_POS[orientation][ij]
        n |= pos << (2 * k + 1)
        orientation ^= POS_TO_ORIENTATION[pos]
    return n | 1


@dataclass(frozen=True, order=True)
class SpatialCellId:
    id: int

    def __post_init__(self) -> None:
        if not 0 <= self.id <= _MASK64:
            raise ValueError(f"cell id out of 64-bit range: {self.id}")

    @property
    def is_valid(self) -> bool:
        return self.face < 6 and (self.lsb & 0x1555555555555555) != 0

    @property
    def lsb(self) -> int:
        return self.id & -self.id

    @property
    def level(self) -> int:
        if self.id == 0:
            raise ValueError("cell id 0 has no level")
        return MAX_LEVEL - ((self.lsb.bit_length() - 1) >> 1)

    @property
    def face(self) -> int:
        return self.id >> POS_BITS

    def parent(self, level: int) -> "SpatialCellId":
        if not 0 <= level <= self.level:
            raise ValueError(f"ancestor level {level} not in [0, {self.level}]")
        new_lsb = lsb_for_level(level)
        return SpatialCellId((self.id & -new_lsb) | new_lsb)

    def to_face_ij(self) -> tuple[int, int, int]:
        """Decode to (face, i, j) of the cell's lower-left leaf."""
        face = self.face
        orientation = face & SWAP_MASK
        i = j = 0
        for k in range(MAX_LEVEL - 1, MAX_LEVEL - 1 - self.level, -1):
            pos = (self.id >> (2 * k + 1)) & 3
            ij = POS_TO_IJ[orientation][pos]
            i |= (ij >> 1) << k
            j |= (ij & 1) << k
            orientation ^= POS_TO_ORIENTATION[pos]
        return face, i, j

    def uv_bounds(self) -> tuple[int, tuple[float, float], tuple[float, float]]:
        face, i, j = self.to_face_ij()
        size = 1 << (MAX_LEVEL - self.level)
        u = (st_to_uv(i / MAX_SIZE), st_to_uv((i + size) / MAX_SIZE))
        v = (st_to_uv(j / MAX_SIZE), st_to_uv((j + size) / MAX_SIZE))
        return face, u, v

    def contains_point(self, lat: float, lng: float, tol: float = 1e-12) -> bool:
        face, u, v = xyz_to_face_uv(_latlng_to_xyz(lat, lng))
        cface, (u0, u1), (v0, v1) = self.uv_bounds()
        return face == cface and u0 - tol <= u <= u1 + tol and v0 - tol <= v <= v1 + tol

    def to_hex(self) -> str:
        return f"{self.id:016x}"

    @classmethod
    def from_hex(cls, text: str) -> "SpatialCellId":
        if len(text) != 16 or any(ch not in "0123456789abcdefABCDEF" for ch in text):
            raise ValueError(f"not a 16-digit hex cell id: {text!r}")
        return cls(int(text, 16))

    def __str__(self) -> str:
        return self.to_hex()


def cell_id(lat: float, lng: float, level: int = MAX_LEVEL) -> SpatialCellId:
    """Cell at ``level`` containing the point (level 30 = leaf, ~1 cm)."""
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be in [0, {MAX_LEVEL}], got {level}")
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lng <= 180.0):
        raise ValueError(f"coordinate out of bounds: {lat}, {lng}")
    face, u, v = xyz_to_face_uv(_latlng_to_xyz(lat, lng))
    leaf = SpatialCellId(_from_face_ij(face, st_to_ij(uv_to_st(u)), st_to_ij(uv_to_st(v))))
    return leaf if level == MAX_LEVEL else leaf.parent(level)


def ancestor(cell: SpatialCellId, level: int) -> SpatialCellId:
    return cell.parent(level)


def to_hex(cell: SpatialCellId) -> str:
    return cell.to_hex()


def from_hex(text: str) -> SpatialCellId:
    return SpatialCellId.from_hex(text)
