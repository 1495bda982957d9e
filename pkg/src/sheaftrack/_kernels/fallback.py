"""Pure-numpy flow-field kernel, used when the compiled extension is absent.

Must stay semantically identical to ``_native.pyx``; the test suite compares
the two implementations on random inputs.
"""

import numpy as np


def field_velocity_batch(points, sources, vortices, gaussians, eps):
    """Background-flow velocity at many points.

    Parameters are packed parameter tables:
      sources   (S, 4): position (3) and signed strength (source > 0, sink < 0)
      vortices  (V, 7): center (3), unit axis (3), signed strength
      gaussians (K, 9): center (3), unit direction (3), strength, lateral
                        width, axial length
    ``eps`` regularizes the point-singularity and vortex denominators.
    Returns an array of shape (P, 3).
    """
    pts = np.ascontiguousarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (P, 3)")
    out = np.zeros_like(pts)
    eps = float(eps)

    sources = np.asarray(sources, dtype=float).reshape(-1, 4)
    if sources.size:
        rel = pts[:, None, :] - sources[None, :, :3]          # (P, S, 3)
        dist = np.sqrt(np.einsum("psk,psk->ps", rel, rel))
        denom = dist * dist * dist + eps**3
        out += np.einsum("s,psk->pk", sources[:, 3], rel / denom[:, :, None])

    vortices = np.asarray(vortices, dtype=float).reshape(-1, 7)
    if vortices.size:
        axes = vortices[:, 3:6]
        rel = pts[:, None, :] - vortices[None, :, :3]         # (P, V, 3)
        axial = np.einsum("pvk,vk->pv", rel, axes)
        perp = rel - axial[:, :, None] * axes[None, :, :]
        denom = np.einsum("pvk,pvk->pv", perp, perp) + eps * eps
        swirl = np.cross(np.broadcast_to(axes[None, :, :], perp.shape), perp)
        out += np.einsum("v,pvk->pk", vortices[:, 6], swirl / denom[:, :, None])

    gaussians = np.asarray(gaussians, dtype=float).reshape(-1, 9)
    if gaussians.size:
        dirs = gaussians[:, 3:6]
        rel = pts[:, None, :] - gaussians[None, :, :3]        # (P, K, 3)
        axial = np.einsum("pgk,gk->pg", rel, dirs)
        lateral = rel - axial[:, :, None] * dirs[None, :, :]
        lat2 = np.einsum("pgk,pgk->pg", lateral, lateral)
        amp = gaussians[:, 6] * np.exp(
            -lat2 / (2.0 * gaussians[:, 7] ** 2) - axial**2 / (2.0 * gaussians[:, 8] ** 2)
        )
        out += amp @ dirs

    return out
