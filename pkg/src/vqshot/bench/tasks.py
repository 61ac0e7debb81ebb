"""Benchmark tasks covering the three supported loss families.

* ``VqeTfimTask`` -- ground-state search for the open-boundary
  transverse-field Ising chain (linear loss over two observable groups).
* ``RegressionTask`` -- regression against labels generated by the model
  itself at hidden teacher parameters (quadratic loss with a trainable
  output weight).
* ``IrisTask`` -- three-class Iris classification through a two-bit
  readout (quadratic loss without a weight parameter).

Every task implements the protocol ``run_optimizer`` consumes:
``loss_kind``, ``init_theta``, ``next_batch``, ``grad_point``,
``exact_loss`` and ``metrics``. Gradient evaluation is the only place
shots are spent (and the only place a noise model acts); everything
reported in ``metrics`` is an exact, noiseless state-vector quantity.
"""

from __future__ import annotations

import csv
import warnings
from importlib import resources

import numpy as np
from scipy import sparse as _sparse
from scipy.sparse.linalg import eigsh as _eigsh

from ..circuits import (
    compile_circuit,
    concat,
    feature_map,
    run_bound,
    run_circuit,
    tfim_ansatz,
    trainable_circuit,
)
from ..core import Observable, PauliGroup, PauliString, expectation, parity_signs
from ..estimators import MinibatchSampler, grad_point_linear, grad_point_quadratic
from ..noise import compile_noisy, noisy_sampler

__all__ = [
    "VqeTfimTask",
    "RegressionTask",
    "IrisTask",
    "tfim_observable",
    "tfim_ground_energy",
    "load_iris_csv",
    "normalize_features",
    "worst_case_error_rate",
]


# ====== Transverse-field Ising ground-state search ======

# Exact diagonalization limits: dense eigensolver up to 10 qubits, sparse
# smallest-eigenvalue solver up to 14; beyond that the ground energy is
# unavailable and traces fall back to raw energies.
_DENSE_DIAG_MAX = 10
_SPARSE_DIAG_MAX = 14


def tfim_observable(n_qubits: int, coupling: float = 1.0,
                    field: float = 1.5) -> Observable:
    """Open-boundary transverse-field Ising Hamiltonian,
    H = -coupling * sum_q Z_q Z_{q+1} - field * sum_q X_q,
    as a two-group observable (the ZZ chain and the X field commute
    qubit-wise within themselves). The groups' shot-allocation weights
    |coefficient| * norm come out to coupling*(N-1) and field*N.
    """
    if n_qubits < 2:
        raise ValueError("need at least two qubits")
    if not (coupling > 0.0 and field > 0.0):
        raise ValueError("coupling and field must be positive")
    pad = "I" * n_qubits
    zz = PauliGroup(
        -coupling,
        tuple(
            PauliString(1.0, pad[:q] + "ZZ" + pad[q + 2 :])
            for q in range(n_qubits - 1)
        ),
    )
    xs = PauliGroup(
        -field,
        tuple(
            PauliString(1.0, pad[:q] + "X" + pad[q + 1 :])
            for q in range(n_qubits)
        ),
    )
    return Observable(n_qubits, (zz, xs))


def tfim_ground_energy(n_qubits: int, coupling: float = 1.0,
                       field: float = 1.5) -> float | None:
    """Exact ground-state energy of the open-boundary transverse-field
    Ising chain, or None when the system is too large to diagonalize.

    The ZZ part is diagonal in the computational basis and each X_q
    couples basis state k to k XOR (1 << q), so the Hamiltonian is built
    directly from bit arithmetic: dense up to 10 qubits, sparse up to 14.
    """
    if n_qubits < 2:
        raise ValueError("need at least two qubits")
    if n_qubits > _SPARSE_DIAG_MAX:
        return None
    dim = 1 << n_qubits
    idx = np.arange(dim)
    diag = np.zeros(dim)
    for q in range(n_qubits - 1):
        differ = ((idx >> q) ^ (idx >> (q + 1))) & 1
        diag -= coupling * (1.0 - 2.0 * differ)
    if n_qubits <= _DENSE_DIAG_MAX:
        ham = np.diag(diag)
        for q in range(n_qubits):
            ham[idx, idx ^ (1 << q)] -= field
        return float(np.linalg.eigvalsh(ham)[0])
    ham = _sparse.diags(diag).tocsr()
    offdiag = np.full(dim, -field)
    for q in range(n_qubits):
        ham = ham + _sparse.csr_matrix(
            (offdiag, (idx, idx ^ (1 << q))), shape=(dim, dim)
        )
    values = _eigsh(ham, k=1, which="SA", return_eigenvectors=False)
    return float(values[0])


class VqeTfimTask:
    """Minimize the energy of the transverse-field Ising chain.

    The loss is linear in the observable, so gradients come from the
    two-point parameter-shift estimator with per-group shot allocation.
    ``metrics`` reports the exact energy error per site,
    (E - E_ground) / (coupling * N), when the ground energy is known,
    and the raw energy otherwise (with a warning at construction).
    """

    loss_kind = "linear"

    def __init__(self, n_qubits: int = 6, depth: int = 3,
                 coupling: float = 1.0, field: float = 1.5, *,
                 allocation: str = "wds", noise=None):
        self.n_qubits = n_qubits
        self.depth = depth
        self.coupling = float(coupling)
        self.field = float(field)
        self.allocation = allocation
        circuit = tfim_ansatz(n_qubits, depth)
        self.n_params = circuit.n_params
        self.obs = tfim_observable(n_qubits, coupling, field)
        self._plain = compile_circuit(circuit)
        if noise is None:
            self._program = self._plain
            self.sampler = None
        else:
            self._program = compile_noisy(circuit, noise)
            self.sampler = noisy_sampler
        self.ground_energy = tfim_ground_energy(n_qubits, coupling, field)
        if self.ground_energy is None:
            warnings.warn(
                f"no exact diagonalization at {n_qubits} qubits; traces "
                "will report raw energy instead of the per-site error",
                RuntimeWarning,
                stacklevel=2,
            )

    def init_theta(self, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        return rng.uniform(0.0, 2.0 * np.pi, self.n_params)

    def next_batch(self, m: int, rng) -> np.ndarray:
        if m != 1:
            raise ValueError(
                "energy minimization has a single implicit data point; "
                f"batch size must be 1, got {m}"
            )
        return np.zeros(1, dtype=np.int64)

    def grad_point(self, index: int, theta, s, rng):
        return grad_point_linear(
            self._program, self.obs, theta, s, rng,
            allocation=self.allocation, sampler=self.sampler,
        )

    def energy(self, theta) -> float:
        """Exact noiseless <H> at theta."""
        return expectation(run_circuit(self._plain, theta), self.obs)

    def exact_loss(self, theta) -> float:
        return self.energy(theta)

    def metrics(self, theta) -> dict:
        value = self.energy(theta)
        if self.ground_energy is not None:
            value = (value - self.ground_energy) / (
                self.coupling * self.n_qubits
            )
        return {"train_loss": value}


# ====== Model-generated regression ======


class RegressionTask:
    """Regression whose labels come from the model class itself.

    Hidden teacher parameters are drawn uniformly, raw targets are the
    exact readout <Z_0> per data point, and a teacher weight rescales
    them to unit standard deviation over the whole dataset. Training
    fits circuit parameters plus a trailing output weight by minimizing
    the mean squared error; per-point gradients use the quadratic-loss
    estimator with coefficients (y^2, -2y, 1).
    """

    loss_kind = "quadratic"

    def __init__(self, n_qubits: int = 4, depth: int = 10, *,
                 n_train: int = 880, n_test: int = 220, seed: int = 0,
                 features=None, noise=None):
        if n_train < 1 or n_test < 1:
            raise ValueError("split sizes must be positive")
        n_points = n_train + n_test
        rng = np.random.default_rng(seed)
        if features is None:
            x = rng.uniform(0.0, 1.0, (n_points, n_qubits))
        else:
            x = np.asarray(features, dtype=np.float64)
            if x.ndim != 2 or x.shape[1] != n_qubits:
                raise ValueError(
                    f"features must have shape ({n_points}, {n_qubits}), "
                    f"got {x.shape}"
                )
            if x.shape[0] != n_points:
                raise ValueError(
                    f"feature rows ({x.shape[0]}) must equal "
                    f"n_train + n_test ({n_points})"
                )
            if not np.all(np.isfinite(x)):
                raise ValueError("non-finite feature value")
        self.n_qubits = n_qubits
        self.depth = depth
        self.features = x
        base = trainable_circuit(n_qubits, depth)
        self.n_circuit_params = base.n_params
        self.n_params = base.n_params + 1  # trailing output weight
        self._plain = [
            compile_circuit(concat(feature_map(xi), base)) for xi in x
        ]
        self._sample_programs = self._plain
        self.sampler = None
        if noise is not None:
            self._sample_programs = [
                compile_noisy(concat(feature_map(xi), base), noise)
                for xi in x
            ]
            self.sampler = noisy_sampler
        self.obs = Observable(
            n_qubits,
            (PauliGroup(1.0, (PauliString(1.0, "Z" + "I" * (n_qubits - 1)),)),),
        )
        self.teacher_theta = rng.uniform(0.0, 2.0 * np.pi, base.n_params)
        raw = self._readouts(self.teacher_theta)
        std = float(np.std(raw))
        if std < 1e-12:
            raise ValueError(
                "degenerate regression target: the generating model is "
                "constant over the dataset"
            )
        self.teacher_weight = 1.0 / std
        self.labels = self.teacher_weight * raw
        order = rng.permutation(n_points)
        self.train_indices = order[:n_train]
        self.test_indices = order[n_train:]
        self._batches = None

    def _readouts(self, theta) -> np.ndarray:
        """Exact <Z_0> per data point; extra trailing parameter entries
        (the output weight) are ignored by the circuits."""
        dim = 1 << self.n_qubits
        signs = parity_signs(dim, 1)
        buf = np.empty(dim, dtype=np.complex128)
        out = np.empty(len(self._plain))
        for k, program in enumerate(self._plain):
            amps = run_bound(program.bind(theta), buf)
            out[k] = float((amps.real**2 + amps.imag**2) @ signs)
        return out

    def init_theta(self, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        angles = rng.uniform(0.0, 2.0 * np.pi, self.n_circuit_params)
        return np.append(angles, 1.0)

    def next_batch(self, m: int, rng) -> np.ndarray:
        if self._batches is None:
            self._batches = MinibatchSampler(len(self.train_indices), rng)
        return self._batches.take(m)

    def grad_point(self, index: int, theta, s, rng):
        point = int(self.train_indices[index])
        y = self.labels[point]
        return grad_point_quadratic(
            self._sample_programs[point], self.obs, theta,
            float(theta[-1]), (y * y, -2.0 * y, 1.0), s, rng,
            sampler=self.sampler,
        )

    def predictions(self, theta) -> np.ndarray:
        """Exact model outputs weight * <Z_0> for every data point."""
        return float(theta[-1]) * self._readouts(theta)

    def exact_loss(self, theta) -> float:
        residual = self.predictions(theta) - self.labels
        return float(np.mean(residual[self.train_indices] ** 2))

    def metrics(self, theta) -> dict:
        residual = self.predictions(theta) - self.labels
        return {
            "train_loss": float(np.mean(residual[self.train_indices] ** 2)),
            "test_loss": float(np.mean(residual[self.test_indices] ** 2)),
        }

    @staticmethod
    def load_features(path, n_features: int, n_points: int) -> np.ndarray:
        """Generic numeric-CSV ingestion: rows are data points, the first
        `n_features` columns are features, any extra trailing columns are
        ignored. One non-numeric header line is allowed and skipped."""
        rows = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                try:
                    values = [float(v) for v in row]
                except ValueError:
                    if lineno == 1 and not rows:
                        continue
                    raise ValueError(
                        f"{path}: line {lineno}: non-numeric field"
                    ) from None
                if len(values) < n_features:
                    raise ValueError(
                        f"{path}: line {lineno}: expected at least "
                        f"{n_features} columns, got {len(values)}"
                    )
                rows.append(values[:n_features])
        if len(rows) != n_points:
            raise ValueError(
                f"{path}: expected {n_points} data rows, found {len(rows)}"
            )
        return np.array(rows)


# ====== Iris classification ======


def load_iris_csv(path=None):
    """Read the Iris dataset (features[k,4], integer labels[k] in {0,1,2}).

    Reads the bundled copy when `path` is None. Malformed content raises
    ValueError naming the offending line.
    """
    if path is None:
        text = (
            resources.files("vqshot.bench")
            .joinpath("data/iris.csv")
            .read_text()
        )
    else:
        with open(path, newline="") as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty dataset file")
    feats, labels = [], []
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ValueError(
                f"line {lineno}: expected 5 fields, got {len(row)}"
            )
        try:
            values = [float(v) for v in row[:4]]
            label = int(row[4])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric field") from None
        if label not in (0, 1, 2):
            raise ValueError(
                f"line {lineno}: class must be 0, 1 or 2, got {label}"
            )
        if not all(np.isfinite(v) for v in values):
            raise ValueError(f"line {lineno}: non-finite feature")
        feats.append(values)
        labels.append(label)
    if not feats:
        raise ValueError("dataset file has no data rows")
    return np.array(feats), np.array(labels, dtype=np.int64)


def normalize_features(x) -> np.ndarray:
    """Min-max normalize each feature column onto [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    if np.any(span == 0.0):
        raise ValueError("constant feature column cannot be normalized")
    return (x - lo) / span


def worst_case_error_rate(probs, labels, epsilon: float) -> float:
    """Pessimistic misclassification rate from exact class probabilities.

    A point counts as an error when the most probable class is wrong OR
    its probability margin over the runner-up is below 2*epsilon — a
    margin thinner than twice the estimation tolerance cannot be called
    reliably, so it is scored as a failure.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
        raise ValueError("probs must be (n_points, n_classes)")
    if not epsilon >= 0.0:
        raise ValueError("epsilon must be >= 0")
    top = np.argmax(probs, axis=1)
    ranked = np.sort(probs, axis=1)
    margin = ranked[:, -1] - ranked[:, -2]
    wrong = (top != labels) | (margin < 2.0 * epsilon)
    return float(np.mean(wrong))


class IrisTask:
    """Three-class Iris classification via a two-bit readout.

    Features are min-max normalized over the full dataset and embedded by
    the data-encoding circuit; measuring qubits 0 and 1 in the Z basis
    gives bits (b0, b1) and the predicted class (b0 + 2*b1) mod 3. The
    per-point loss is the squared failure probability (1 - p)^2 where p
    is the probability of the correct class, estimated from indicator
    samples. Error-rate metrics use the pessimistic margin rule with the
    task's epsilon.
    """

    loss_kind = "quadratic_noweight"
    n_qubits = 4

    def __init__(self, depth: int = 4, *, n_train: int = 120,
                 n_test: int = 30, epsilon: float = 1e-2, seed: int = 0,
                 noise=None, data_path=None):
        if n_train < 1 or n_test < 1:
            raise ValueError("split sizes must be positive")
        if not epsilon >= 0.0:
            raise ValueError("epsilon must be >= 0")
        features, labels = load_iris_csv(data_path)
        if n_train + n_test != labels.shape[0]:
            raise ValueError(
                f"split {n_train}+{n_test} does not cover the "
                f"{labels.shape[0]}-point dataset"
            )
        self.depth = depth
        self.epsilon = float(epsilon)
        self.features = normalize_features(features)
        self.labels = labels
        rng = np.random.default_rng(seed)
        order = rng.permutation(labels.shape[0])
        self.train_indices = order[:n_train]
        self.test_indices = order[n_train:]
        base = trainable_circuit(self.n_qubits, depth)
        self.n_params = base.n_params
        per_point = [concat(feature_map(zi), base) for zi in self.features]
        self._plain = [compile_circuit(c) for c in per_point]
        self._sample_programs = self._plain
        self.sampler = None
        if noise is not None:
            self._sample_programs = [
                compile_noisy(c, noise) for c in per_point
            ]
            self.sampler = noisy_sampler
        self.obs = Observable(
            self.n_qubits,
            (PauliGroup(1.0, (PauliString(1.0, "ZZII"),)),),
        )
        idx = np.arange(1 << self.n_qubits)
        # class of each basis state, from the bits of qubits 0 and 1
        self._class_of = ((idx & 1) + 2 * ((idx >> 1) & 1)) % 3
        self._train_maps = [
            self._indicator(int(labels[i])) for i in self.train_indices
        ]
        self._batches = None

    @staticmethod
    def _indicator(label: int):
        """Outcome map turning sampled basis states into correct-class
        indicator values (1.0 on success, 0.0 on failure)."""

        def mapper(values, bits):
            predicted = ((bits & 1) + 2 * ((bits >> 1) & 1)) % 3
            return (predicted == label).astype(np.float64)

        return mapper

    def init_theta(self, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        return rng.uniform(0.0, 2.0 * np.pi, self.n_params)

    def next_batch(self, m: int, rng) -> np.ndarray:
        if self._batches is None:
            self._batches = MinibatchSampler(len(self.train_indices), rng)
        return self._batches.take(m)

    def grad_point(self, index: int, theta, s, rng):
        point = int(self.train_indices[index])
        return grad_point_quadratic(
            self._sample_programs[point], self.obs, theta, None,
            (1.0, -2.0, 1.0), s, rng,
            sampler=self.sampler, outcome_map=self._train_maps[index],
        )

    def class_probabilities(self, theta, indices) -> np.ndarray:
        """Exact noiseless class probabilities, one row per data point."""
        indices = np.asarray(indices)
        dim = 1 << self.n_qubits
        buf = np.empty(dim, dtype=np.complex128)
        probs = np.empty((indices.shape[0], 3))
        for row, i in enumerate(indices):
            amps = run_bound(self._plain[int(i)].bind(theta), buf)
            weight = amps.real**2 + amps.imag**2
            probs[row] = np.bincount(
                self._class_of, weights=weight, minlength=3
            )
        return probs

    def _split_metrics(self, theta, indices):
        probs = self.class_probabilities(theta, indices)
        correct = probs[np.arange(indices.shape[0]), self.labels[indices]]
        loss = float(np.mean((1.0 - correct) ** 2))
        err = worst_case_error_rate(probs, self.labels[indices], self.epsilon)
        return loss, err

    def exact_loss(self, theta) -> float:
        return self._split_metrics(theta, self.train_indices)[0]

    def metrics(self, theta) -> dict:
        train_loss, train_err = self._split_metrics(theta, self.train_indices)
        test_loss, test_err = self._split_metrics(theta, self.test_indices)
        return {
            "train_loss": train_loss,
            "test_loss": test_loss,
            "train_err": train_err,
            "test_err": test_err,
        }
