"""The dihedral group D4 of axis-aligned image symmetries.

Eight elements: four rotations (rot90 is counter-clockwise) and four
reflections (horizontal flip, vertical flip, main-diagonal transpose,
anti-diagonal transpose). All operations are pixel-exact permutations.
"""

from __future__ import annotations

import enum
import functools

import numpy as np

from .image import Image


class Transform(enum.IntEnum):
    IDENTITY = 0
    ROT90 = 1
    ROT180 = 2
    ROT270 = 3
    HFLIP = 4
    VFLIP = 5
    TRANSPOSE = 6
    ANTITRANSPOSE = 7

    @property
    def short_name(self) -> str:
        return _NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> "Transform":
        try:
            return _BY_NAME[name.strip().lower()]
        except KeyError:
            raise ValueError(
                f"unknown transform {name!r}; expected one of {sorted(_BY_NAME)}"
            ) from None

    @property
    def swaps_axes(self) -> bool:
        return self in (
            Transform.ROT90,
            Transform.ROT270,
            Transform.TRANSPOSE,
            Transform.ANTITRANSPOSE,
        )


_NAMES = {
    Transform.IDENTITY: "id",
    Transform.ROT90: "rot90",
    Transform.ROT180: "rot180",
    Transform.ROT270: "rot270",
    Transform.HFLIP: "hflip",
    Transform.VFLIP: "vflip",
    Transform.TRANSPOSE: "transpose",
    Transform.ANTITRANSPOSE: "antitranspose",
}
_BY_NAME = {name: t for t, name in _NAMES.items()}

ALL_TRANSFORMS = tuple(Transform)


def apply_to_array(arr: np.ndarray, t: Transform) -> np.ndarray:
    """Apply a D4 element to the leading two axes of an array (view)."""
    if t == Transform.IDENTITY:
        return arr
    if t == Transform.ROT90:
        return np.rot90(arr, 1, axes=(0, 1))
    if t == Transform.ROT180:
        return np.rot90(arr, 2, axes=(0, 1))
    if t == Transform.ROT270:
        return np.rot90(arr, 3, axes=(0, 1))
    if t == Transform.HFLIP:
        return arr[:, ::-1]
    if t == Transform.VFLIP:
        return arr[::-1, :]
    if t == Transform.TRANSPOSE:
        return arr.swapaxes(0, 1)
    if t == Transform.ANTITRANSPOSE:
        # transpose composed after rot180
        return np.rot90(arr, 2, axes=(0, 1)).swapaxes(0, 1)
    raise ValueError(f"invalid transform {t!r}")


def apply_transform(img: Image, t: Transform) -> Image:
    """Pixel-exact permutation of samples; H and W swap for the four
    axis-swapping elements."""
    return Image(apply_to_array(img.data, Transform(t)))


_INVERSES = {
    Transform.ROT90: Transform.ROT270,
    Transform.ROT270: Transform.ROT90,
}


def inverse(t: Transform) -> Transform:
    """The group inverse: apply(apply(x, t), inverse(t)) == x exactly."""
    t = Transform(t)
    return _INVERSES.get(t, t)  # all non-rotations are involutions


@functools.lru_cache(maxsize=1)
def _composition_table() -> dict[tuple[Transform, Transform], Transform]:
    # Derived from the array action itself on a marker whose 8 views are
    # all distinct, so the table cannot drift from apply_to_array.
    marker = np.arange(6, dtype=np.int64).reshape(2, 3)
    views = {t: apply_to_array(marker, t) for t in Transform}
    table = {}
    for a in Transform:
        for b in Transform:
            combined = apply_to_array(views[b], a)
            for t, view in views.items():
                if combined.shape == view.shape and np.array_equal(combined, view):
                    table[(a, b)] = t
                    break
    return table


def compose(a: Transform, b: Transform) -> Transform:
    """The element equal to applying b first, then a:
    apply(x, compose(a, b)) == apply(apply(x, b), a)."""
    return _composition_table()[(Transform(a), Transform(b))]
