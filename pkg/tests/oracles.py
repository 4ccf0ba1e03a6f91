"""Independent slow reference implementations used by the tests."""

import numpy as np


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def naive_asm(field, distance, wavelength, n_med, dx, dy):
    """Angular-spectrum propagation with explicit DFT matrices and a scalar kernel loop."""
    L, M = field.shape
    FL, FM = dft_matrix(L), dft_matrix(M)
    spec = FL @ field @ FM.T
    k = 2 * np.pi * n_med / wavelength
    out = np.zeros_like(spec)
    for p in range(L):
        fx = (p if p < (L + 1) // 2 else p - L) / (L * dx)
        for q in range(M):
            fy = (q if q < (M + 1) // 2 else q - M) / (M * dy)
            rad = 1 - (wavelength * fx) ** 2 - (wavelength * fy) ** 2
            if rad >= 0:
                out[p, q] = spec[p, q] * np.exp(1j * k * distance * np.sqrt(rad))
    return (np.conj(FL) @ out @ np.conj(FM).T) / (L * M)


def loss_bc_loops(o):
    L, M, n1 = o.shape
    N = n1 - 1
    sx = sum(o[0, m, i] ** 2 + o[L - 1, m, i] ** 2 for m in range(M) for i in range(n1))
    sy = sum(o[l, 0, i] ** 2 + o[l, M - 1, i] ** 2 for l in range(L) for i in range(n1))
    sz = sum(o[l, m, 0] ** 2 + o[l, m, N] ** 2 for l in range(L) for m in range(M))
    return sx / (2 * M * (N + 1)) + sy / (2 * L * (N + 1)) + sz / (2 * L * M)


def loss_data_loops(u0, H):
    L, M = H.shape
    total = 0.0
    for l in range(L):
        for m in range(M):
            total += (abs(u0[l, m]) ** 2 - H[l, m]) ** 2
    return total / (L * M)


def tamura_loops(image):
    """Tamura of the central-difference gradient magnitude, edge-replicated."""
    img = np.asarray(image, dtype=float)
    L, M = img.shape
    g = np.zeros_like(img)
    for l in range(L):
        for m in range(M):
            gx = (img[min(l + 1, L - 1), m] - img[max(l - 1, 0), m]) / 2
            gy = (img[l, min(m + 1, M - 1)] - img[l, max(m - 1, 0)]) / 2
            g[l, m] = np.hypot(gx, gy)
    mean = g.mean()
    return 0.0 if mean == 0 else float(np.sqrt(g.std() / mean))
