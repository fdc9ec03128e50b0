"""Binary PLY export/import in the layout common 3DGS viewers read.

Colors are stored as degree-0 spherical-harmonic coefficients
``(c - 0.5) / SH_C0``, opacity as its logit, scales as their logarithm and
rotations as (w, x, y, z) quaternions.
"""

from __future__ import annotations

import numpy as np

from .attributes import GaussianSet
from .errors import FormatError

SH_C0 = 0.28209479177387814

PROPERTIES = ("x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
              "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3")

_VERTEX_DTYPE = np.dtype([(name, "<f4") for name in PROPERTIES])


def _logit(p):
    return np.log(p) - np.log1p(-p)


def gaussians_to_records(g: GaussianSet) -> np.ndarray:
    rec = np.empty(len(g), dtype=_VERTEX_DTYPE)
    cols = np.concatenate([
        g.means, (g.colors - 0.5) / SH_C0, _logit(g.opacities)[:, None], np.log(g.scales),
        g.rotations,
    ], axis=1)
    for k, name in enumerate(PROPERTIES):
        rec[name] = cols[:, k]
    return rec


def write_ply(path, g: GaussianSet):
    rec = gaussians_to_records(g)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(rec)}"]
    header += [f"property float {name}" for name in PROPERTIES]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())


def _parse_header(blob):
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise FormatError("not a PLY file")
    lines = blob[:end].decode("ascii").splitlines()[1:]
    count = None
    props = []
    fmt = None
    for line in lines:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            if parts[1] != "vertex" or count is not None:
                raise FormatError(f"unsupported element {parts[1]!r}")
            count = int(parts[2])
        elif parts[0] == "property":
            if parts[1] not in ("float", "float32"):
                raise FormatError(f"unsupported property type {parts[1]!r}")
            props.append(parts[2])
    if fmt != "binary_little_endian":
        raise FormatError(f"unsupported PLY format {fmt!r}")
    if count is None:
        raise FormatError("PLY has no vertex element")
    missing = set(PROPERTIES) - set(props)
    if missing:
        raise FormatError(f"missing properties {sorted(missing)}")
    return count, props, end + len(b"end_header\n")


def read_ply(path) -> GaussianSet:
    """Inverse of :func:`write_ply`; extra float properties are ignored."""
    with open(path, "rb") as fh:
        blob = fh.read()
    count, props, offset = _parse_header(blob)
    dtype = np.dtype([(name, "<f4") for name in props])
    if len(blob) - offset != count * dtype.itemsize:
        raise FormatError("PLY payload size does not match header")
    rec = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)

    def cols(*names):
        return np.stack([rec[n].astype(np.float64) for n in names], axis=1)

    return GaussianSet(
        means=cols("x", "y", "z"),
        scales=np.exp(cols("scale_0", "scale_1", "scale_2")),
        rotations=cols("rot_0", "rot_1", "rot_2", "rot_3"),
        colors=cols("f_dc_0", "f_dc_1", "f_dc_2") * SH_C0 + 0.5,
        opacities=1.0 / (1.0 + np.exp(-rec["opacity"].astype(np.float64))),
    )
