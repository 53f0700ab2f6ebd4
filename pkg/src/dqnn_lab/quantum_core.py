"""Dense linear algebra, states, distances and Haar sampling.

States are plain numpy arrays: pure states are 1-D complex vectors of
length ``2**n`` and density matrices are ``(2**n, 2**n)`` complex arrays.
Qubit 0 is the most-significant Kronecker factor everywhere in the package.
Most functions also accept a leading batch axis on density matrices.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-10
UPDATE_HERMITIAN_TOL = 1e-8
TRACE_TOL = 1e-10
POSITIVITY_FLOOR = -1e-10
NORM_TOL = 1e-12

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class ValidationError(ValueError):
    """Raised when an array violates a physical invariant."""


def make_rng(seed: int | np.random.SeedSequence | None = None) -> np.random.Generator:
    """Deterministic PCG64 stream. Same seed and call order give same draws."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``n`` independent child streams off ``rng``."""
    return [np.random.Generator(bg) for bg in rng.bit_generator.spawn(n)]


def num_qubits_of(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


# --- invariant checks -------------------------------------------------------

def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.shape[-1] == a.shape[-2] and bool(
        np.max(np.abs(a - np.swapaxes(a.conj(), -1, -2)), initial=0.0) <= tol
    )


def is_unitary(u: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def validate_pure_state(psi: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValidationError("pure state must be a 1-D vector")
    num_qubits_of(psi.shape[0])
    if abs(np.linalg.norm(psi) - 1.0) > tol:
        raise ValidationError(f"state norm {np.linalg.norm(psi)!r} is not 1")
    return psi


def validate_density_matrix(rho: np.ndarray, tol: float = TRACE_TOL) -> np.ndarray:
    """Shared validator: Hermitian, unit trace, eigenvalues above the floor."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError("density matrix must be square")
    num_qubits_of(rho.shape[0])
    if not is_hermitian(rho, tol):
        raise ValidationError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValidationError(f"density matrix trace {np.trace(rho).real!r} is not 1")
    if np.linalg.eigvalsh(rho).min() < POSITIVITY_FLOOR:
        raise ValidationError("density matrix has a negative eigenvalue")
    return rho


# --- constructors -------------------------------------------------------------

def basis_state(index: int, num_qubits: int) -> np.ndarray:
    psi = np.zeros(1 << num_qubits, dtype=complex)
    psi[index] = 1.0
    return psi


def normalize(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / norm


def projector(psi: np.ndarray) -> np.ndarray:
    """|psi><psi|; batched over leading axes."""
    psi = np.asarray(psi, dtype=complex)
    return psi[..., :, None] * psi[..., None, :].conj()


def zero_projector(num_qubits: int) -> np.ndarray:
    p = np.zeros((1 << num_qubits, 1 << num_qubits), dtype=complex)
    p[0, 0] = 1.0
    return p


def maximally_mixed(num_qubits: int) -> np.ndarray:
    d = 1 << num_qubits
    return np.eye(d, dtype=complex) / d


# --- tensor structure ---------------------------------------------------------

def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with ``a`` on the leading qubits."""
    return np.kron(a, b)


def partial_trace(rho: np.ndarray, discard, num_qubits: int | None = None) -> np.ndarray:
    """Trace out the qubits in ``discard``; kept qubits keep their relative order.

    ``rho`` may carry leading batch axes.
    """
    rho = np.asarray(rho)
    n = num_qubits if num_qubits is not None else num_qubits_of(rho.shape[-1])
    discard = list(discard)
    if len(set(discard)) != len(discard):
        raise ValueError("discard indices must be distinct")
    if any(q < 0 or q >= n for q in discard):
        raise IndexError(f"discard index out of range for {n} qubits")
    keep = [q for q in range(n) if q not in discard]
    batch = rho.shape[:-2]
    t = rho.reshape(batch + (2,) * (2 * n))
    # einsum labels: batch, row bits, column bits; traced bits share a label
    nb = len(batch)
    letters = iter("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
    bl = [next(letters) for _ in range(nb)]
    rows = [next(letters) for _ in range(n)]
    cols = [rows[q] if q in discard else next(letters) for q in range(n)]
    out = bl + [rows[q] for q in keep] + [cols[q] for q in keep]
    expr = "".join(bl + rows + cols) + "->" + "".join(out)
    dk = 1 << len(keep)
    return np.einsum(expr, t).reshape(batch + (dk, dk))


def trace_leading(rho: np.ndarray, dim_lead: int) -> np.ndarray:
    """Trace out a contiguous leading block of dimension ``dim_lead``."""
    d = rho.shape[-1] // dim_lead
    t = rho.reshape(rho.shape[:-2] + (dim_lead, d, dim_lead, d))
    return np.einsum("...aiaj->...ij", t)


def permutation_operator(perm, num_qubits: int) -> np.ndarray:
    """Unitary P with P|b_0..b_{n-1}> = |b'> where qubit q is moved to position perm[q]."""
    n = num_qubits
    d = 1 << n
    idx = np.arange(d)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    new = np.zeros(d, dtype=int)
    for q in range(n):
        new |= bits[:, q] << (n - 1 - perm[q])
    p = np.zeros((d, d), dtype=complex)
    p[new, idx] = 1.0
    return p


def embed_operator(u: np.ndarray, targets, total: int) -> np.ndarray:
    """Act as ``u`` on ``targets`` (in listed order), identity elsewhere."""
    targets = list(targets)
    k = len(targets)
    if len(set(targets)) != k:
        raise ValueError("duplicate targets")
    if any(t < 0 or t >= total for t in targets):
        raise IndexError("target out of range")
    if u.shape != (1 << k, 1 << k):
        raise ValueError(f"operator of shape {u.shape} does not act on {k} qubits")
    rest = [q for q in range(total) if q not in targets]
    full = np.kron(u, np.eye(1 << len(rest), dtype=complex))
    order = targets + rest
    if order == list(range(total)):
        return full
    # move position i of ``order`` back to qubit order[i]
    p = permutation_operator(order, total)
    return p @ full @ p.T


def apply_to_qubits(state: np.ndarray, u: np.ndarray, targets, num_qubits: int) -> np.ndarray:
    """Apply ``u`` to ``targets`` of a batched state tensor of shape (..., 2**n)."""
    k = len(targets)
    batch = state.shape[:-1]
    t = state.reshape(batch + (2,) * num_qubits)
    nb = len(batch)
    axes = [nb + q for q in targets]
    t = np.moveaxis(t, axes, range(nb, nb + k))
    shp = t.shape
    t = (u @ t.reshape(batch + (1 << k, -1))).reshape(shp)
    t = np.moveaxis(t, range(nb, nb + k), axes)
    return t.reshape(batch + (1 << num_qubits,))


# --- distances ------------------------------------------------------------------

def fidelity_pure_mixed(phi: np.ndarray, rho: np.ndarray) -> float | np.ndarray:
    """<phi|rho|phi>. Batched over matching leading axes."""
    phi = np.asarray(phi)
    rho = np.asarray(rho)
    if phi.shape[-1] != rho.shape[-1]:
        raise ValueError("dimension mismatch")
    val = np.einsum("...i,...ij,...j->...", phi.conj(), rho, phi)
    if np.max(np.abs(val.imag), initial=0.0) > 1e-10:
        raise ValidationError("fidelity has a non-negligible imaginary part")
    return val.real if val.ndim else float(val.real)


def hilbert_schmidt_distance(rho: np.ndarray, sigma: np.ndarray) -> float | np.ndarray:
    """tr((rho - sigma)^2)."""
    if np.shape(rho)[-1] != np.shape(sigma)[-1]:
        raise ValueError("dimension mismatch")
    diff = np.asarray(rho) - np.asarray(sigma)
    val = np.einsum("...ij,...ji->...", diff, diff).real
    return val if val.ndim else float(val)


def trace_norm_half(h: np.ndarray) -> float:
    """Half the sum of absolute eigenvalues of a Hermitian matrix."""
    if not is_hermitian(h, 1e-8):
        raise ValidationError("trace norm requires a Hermitian input")
    return float(0.5 * np.abs(np.linalg.eigvalsh(h)).sum())


# --- Haar sampling ------------------------------------------------------------

def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix with phase fix."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))[None, :]


def haar_unitaries(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent Haar unitaries, shape (n, dim, dim)."""
    z = (rng.standard_normal((n, dim, dim)) + 1j * rng.standard_normal((n, dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[:, None, :]


def haar_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """First column of a Haar unitary, i.e. U|0...0>."""
    return haar_unitary(dim, rng)[:, 0].copy()


def haar_states(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return haar_unitaries(dim, n, rng)[:, :, 0].copy()


# --- exponentials ---------------------------------------------------------------

def hermitian_exp(k: np.ndarray, eps: float) -> np.ndarray:
    """exp(i*eps*K) for Hermitian K via eigendecomposition."""
    k = np.asarray(k, dtype=complex)
    if not is_hermitian(k, UPDATE_HERMITIAN_TOL):
        raise ValidationError("hermitian_exp requires a Hermitian matrix")
    k = 0.5 * (k + k.conj().T)
    w, v = np.linalg.eigh(k)
    return (v * np.exp(1j * eps * w)[None, :]) @ v.conj().T


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """GUE-style sample (H + H^dagger) / 2."""
    h = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (h + h.conj().T)


def random_density_matrix(num_qubits: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state from a Ginibre matrix of the given rank."""
    d = 1 << num_qubits
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
