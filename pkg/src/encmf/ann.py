"""Dense network for the nonlinear conditional-mean correction.

The network learns the residual ``q - g_l(y)`` left by the affine fit.  It is
trained with Adam on an augmented dataset (``M`` observation-noise draws per
forecast member), keeps the parameter snapshot with the lowest test-split
metric, and is switched on only if it beats the affine fit on that split.

Parameters live in one flat vector; per-layer weights ``(in, out)`` and
biases ``(out,)`` are views into it, layer by layer, weights first.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, NumericalError
from .filters import ConditionalMeanModel
from .observation import NoiseModel, ObservationMap
from .rng import RngPolicy
from .stats import AffineEstimator, as_ensemble, fit_affine

SNAPSHOT_FORMAT = "encmf-dense-v1"

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0).astype(float)),
    "identity": (lambda z: z, lambda a: np.ones_like(a)),
}


def _tanh_backprop(delta, a, tmp):
    np.multiply(a, a, out=tmp)
    np.subtract(1.0, tmp, out=tmp)
    delta *= tmp


def _relu_backprop(delta, a, tmp):
    delta[a <= 0] = 0.0


# in-place forms used by the training hot loop: (activate(z), scale delta by derivative)
_INPLACE = {
    "tanh": (lambda z: np.tanh(z, out=z), _tanh_backprop),
    "relu": (lambda z: np.maximum(z, 0.0, out=z), _relu_backprop),
    "identity": (lambda z: z, lambda delta, a, tmp: None),
}


@dataclass
class TrainConfig:
    epochs_max: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 64
    l2_coeff: float = 1e-4
    M: int = 1
    split_ratio: float = 0.7
    hidden: tuple = (20,)
    activation: str = "tanh"
    patience: Optional[int] = None   # stop after this many epochs without a new best
    warm_start: bool = False
    seed: int = 0                    # only used when no RngPolicy is supplied

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.epochs_max < 1:
            raise DomainError("epochs_max must be >= 1")
        if self.M < 1:
            raise DomainError("augmentation factor M must be >= 1")
        if not 0.0 < self.split_ratio < 1.0:
            raise DomainError("split_ratio must lie in (0, 1)")
        if self.batch_size < 1 or self.learning_rate <= 0 or self.l2_coeff < 0:
            raise DomainError("invalid optimizer settings")
        if self.activation not in _ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.patience is not None and self.patience < 1:
            raise DomainError("patience must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class DenseNetwork:
    """Feed-forward net; hidden layers use ``activation``, the output is linear."""

    def __init__(self, layer_sizes: Sequence[int], activation: str = "tanh",
                 params: Optional[np.ndarray] = None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise DomainError(f"invalid layer sizes {sizes}")
        if activation not in _ACTIVATIONS:
            raise DomainError(f"unknown activation {activation!r}")
        self.layer_sizes = sizes
        self.activation = activation
        self.n_params = sum((i + 1) * o for i, o in zip(sizes[:-1], sizes[1:]))
        self.params = np.zeros(self.n_params)
        if params is not None:
            params = np.asarray(params, dtype=float)
            if params.shape != (self.n_params,):
                raise DomainError(f"expected {self.n_params} parameters, got {params.shape}")
            self.params[:] = params
        self.weights, self.biases = self._views(self.params)
        self._weight_mask = np.zeros(self.n_params, dtype=bool)
        for W in self._views(self._weight_mask)[0]:
            W[...] = True

    def _views(self, flat):
        Ws, bs, k = [], [], 0
        for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            Ws.append(flat[k:k + i * o].reshape(i, o))
            k += i * o
            bs.append(flat[k:k + o])
            k += o
        return Ws, bs

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def init_glorot(self, rng: np.random.Generator) -> "DenseNetwork":
        for W, b in zip(self.weights, self.biases):
            limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[...] = rng.uniform(-limit, limit, size=W.shape)
            b[...] = 0.0
        return self

    def weight_norm2(self) -> float:
        w = self.params[self._weight_mask]
        return float(w @ w)

    def __call__(self, y) -> np.ndarray:
        return forward(self, y)

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(self.layer_sizes, self.activation, self.params.copy())


def forward(net: DenseNetwork, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != net.n_in:
        raise DomainError(f"input dimension {y.shape[-1]} != {net.n_in}")
    act = _ACTIVATIONS[net.activation][0]
    a = y
    last = len(net.weights) - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ W + b
        if l < last:
            a = act(a)
    return a


def loss_and_grad(net: DenseNetwork, y, target, l2_coeff: float = 0.0,
                  grad_out: Optional[np.ndarray] = None):
    """Batch loss ``mean_b |net(y_b) - t_b|^2 + l2 * |W|^2`` and its flat gradient."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    B = y.shape[0]
    if B == 0:
        raise DomainError("empty batch")
    act, dact = _ACTIVATIONS[net.activation]
    acts = [y]
    a = y
    last = len(net.weights) - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ W + b
        if l < last:
            a = act(a)
        acts.append(a)
    diff = a - target
    loss = float(np.sum(diff * diff)) / B
    if l2_coeff:
        loss += l2_coeff * net.weight_norm2()
    if not np.isfinite(loss):
        raise NumericalError("non-finite training loss")

    grad = np.empty(net.n_params) if grad_out is None else grad_out
    gW, gb = net._views(grad)
    delta = diff * (2.0 / B)
    for l in range(last, -1, -1):
        np.dot(acts[l].T, delta, out=gW[l])
        np.sum(delta, axis=0, out=gb[l])
        if l:
            delta = (delta @ net.weights[l].T) * dact(acts[l])
    if l2_coeff:
        grad[net._weight_mask] += 2.0 * l2_coeff * net.params[net._weight_mask]
    return loss, grad


class Adam:
    """Adam on a flat parameter vector (in-place updates)."""

    def __init__(self, size: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self._tmp = np.zeros(size)

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite gradient")
        self.t += 1
        b1, b2, tmp = self.beta1, self.beta2, self._tmp
        self.m *= b1
        self.m += (1.0 - b1) * grad
        self.v *= b2
        np.multiply(grad, grad, out=tmp)
        tmp *= 1.0 - b2
        self.v += tmp
        lr_t = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        np.sqrt(self.v, out=tmp)
        tmp += self.eps * np.sqrt(1.0 - b2 ** self.t)
        np.divide(self.m, tmp, out=tmp)
        tmp *= lr_t
        params -= tmp


    def update(self, params: np.ndarray, grad: np.ndarray) -> None:
        """Same update as :meth:`step` without the finiteness check (hot loop)."""
        self.t += 1
        b1, b2, tmp, m, v = self.beta1, self.beta2, self._tmp, self.m, self.v
        m -= grad
        m *= b1
        m += grad
        np.multiply(grad, grad, out=tmp)
        v -= tmp
        v *= b2
        v += tmp
        c2 = np.sqrt(1.0 - b2 ** self.t)
        lr_t = self.lr * c2 / (1.0 - b1 ** self.t)
        np.sqrt(v, out=tmp)
        tmp += self.eps * c2
        np.divide(m, tmp, out=tmp)
        tmp *= lr_t
        params -= tmp


class _BatchWorkspace:
    """Preallocated buffers for repeated gradient evaluation on one network.

    Produces the gradient of :func:`loss_and_grad` with far fewer temporary
    arrays; the loss value itself is not computed.
    """

    def __init__(self, net: DenseNetwork, batch_size: int, l2_coeff: float):
        self.net = net
        self.l2 = 2.0 * l2_coeff
        self.grad = np.empty(net.n_params)
        self.gW, self.gb = net._views(self.grad)
        self.act, self.backprop = _INPLACE[net.activation]
        self._bufs = {}

    def _buffers(self, B):
        if B not in self._bufs:
            sizes = self.net.layer_sizes
            self._bufs[B] = ([np.empty((B, s)) for s in sizes[1:]],
                             [np.empty((B, s)) for s in sizes[1:]],
                             np.ones(B), [np.empty((B, s)) for s in sizes[1:]])
        return self._bufs[B]

    def gradient(self, X, T) -> np.ndarray:
        net, B = self.net, X.shape[0]
        acts, deltas, ones, tmps = self._buffers(B)
        Ws, bs = net.weights, net.biases
        last = len(Ws) - 1
        act = self.act
        a = X
        for l in range(last + 1):
            z = acts[l]
            np.dot(a, Ws[l], out=z)
            z += bs[l]
            if l < last:
                act(z)
            a = z
        d = deltas[last]
        np.subtract(a, T, out=d)
        d *= 2.0 / B
        for l in range(last, -1, -1):
            np.dot((acts[l - 1] if l else X).T, d, out=self.gW[l])
            np.dot(ones, d, out=self.gb[l])
            if l:
                nd = deltas[l - 1]
                np.dot(d, Ws[l].T, out=nd)
                self.backprop(nd, acts[l - 1], tmps[l - 1])
                d = nd
        if self.l2:
            for gW, W in zip(self.gW, Ws):
                gW += self.l2 * W
        return self.grad


def optimizer_step(net: DenseNetwork, grad: np.ndarray, state: Adam) -> DenseNetwork:
    state.step(net.params, grad)
    return net


@dataclass(frozen=True, eq=False)
class Normalizer:
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X, floor: float = 1e-8) -> "Normalizer":
        X = as_ensemble(X)
        return cls(X.mean(axis=0), np.maximum(X.std(axis=0), floor))

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def denormalize(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.shift


class CorrectionNet:
    """``g_NN`` in physical units: normalize ``y``, run the net, denormalize."""

    def __init__(self, net: DenseNetwork, input_norm: Normalizer, target_norm: Normalizer):
        self.net = net
        self.input_norm = input_norm
        self.target_norm = target_norm

    def __call__(self, y):
        return self.target_norm.denormalize(forward(self.net, self.input_norm.normalize(y)))

    def to_dict(self) -> dict:
        return {
            "format": SNAPSHOT_FORMAT,
            "layer_sizes": list(self.net.layer_sizes),
            "activation": self.net.activation,
            "params": self.net.params.tolist(),
            "input_norm": {"shift": self.input_norm.shift.tolist(),
                           "scale": self.input_norm.scale.tolist()},
            "target_norm": {"shift": self.target_norm.shift.tolist(),
                            "scale": self.target_norm.scale.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorrectionNet":
        if d.get("format") != SNAPSHOT_FORMAT:
            raise DomainError(f"unsupported snapshot format {d.get('format')!r}")
        net = DenseNetwork(d["layer_sizes"], d["activation"], np.array(d["params"], dtype=float))
        norm = lambda k: Normalizer(np.array(d[k]["shift"], dtype=float),
                                    np.array(d[k]["scale"], dtype=float))
        return cls(net, norm("input_norm"), norm("target_norm"))


def save_snapshot(model: CorrectionNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_snapshot(path) -> CorrectionNet:
    with open(path) as fh:
        return CorrectionNet.from_dict(json.load(fh))


@dataclass(eq=False)
class AugmentedDataset:
    """Pairs ``(h(q_i) + xi_ij, q_i)``, member-major: rows ``i*M .. i*M+M-1`` belong to member ``i``."""

    y: np.ndarray
    q: np.ndarray
    member: np.ndarray
    M: int

    def __len__(self):
        return self.y.shape[0]


def build_augmented(Q, hmap: ObservationMap, noise: NoiseModel, M: int,
                    rng: np.random.Generator, members: Optional[np.ndarray] = None) -> AugmentedDataset:
    if M < 1:
        raise DomainError("M must be >= 1")
    Q = as_ensemble(Q)
    N = Q.shape[0]
    HQ = hmap(Q)
    y = np.repeat(HQ, M, axis=0) + noise.sample(rng, size=N * M)
    ids = np.arange(N) if members is None else np.asarray(members)
    return AugmentedDataset(y, np.repeat(Q, M, axis=0), np.repeat(ids, M), M)


def _mean_sq_residual(q, y, linear: AffineEstimator, correction) -> float:
    r = q - linear(y)
    if correction is not None:
        r -= correction(y)
    return float(np.mean(np.sum(r * r, axis=1)))


def metric_vr(correction, linear: AffineEstimator, data: AugmentedDataset) -> float:
    """Variance-reduced MSE: average of ``|q - g_l(y) - g_NN(y)|^2`` over all N*M pairs.

    ``correction=None`` gives the affine-only metric.
    """
    if len(data) == 0:
        raise DomainError("empty dataset")
    return _mean_sq_residual(data.q, data.y, linear, correction)


def metric_crude(correction, linear: AffineEstimator, Q, Y) -> float:
    """Crude estimator on the raw forecast pairs ``(y_f(i), q_f(i))``."""
    return _mean_sq_residual(as_ensemble(Q), as_ensemble(Y), linear, correction)


def select_model(m_ann: float, m_lin: float) -> int:
    """1 iff the affine-only metric is strictly worse than the network's."""
    if not (np.isfinite(m_ann) and np.isfinite(m_lin)):
        raise DomainError("model selection needs finite metrics")
    return int(m_lin > m_ann)


def train_with_callback(model: CorrectionNet, linear: AffineEstimator, train: AugmentedDataset,
                        test: AugmentedDataset, cfg: TrainConfig, rng: np.random.Generator):
    """Mini-batch Adam training with best-on-test snapshot retention.

    Returns ``(best_params, history)`` where ``history[0]`` is the metric of
    the initial parameters and ``history[e]`` the test metric after epoch
    ``e``.  ``model.net`` is left holding ``best_params``.
    """
    if cfg.epochs_max < 1:
        raise DomainError("epochs_max must be >= 1")
    if np.intersect1d(train.member, test.member).size:
        raise DomainError("train and test splits share members")
    net = model.net
    X = model.input_norm.normalize(train.y)
    T = model.target_norm.normalize(train.q - linear(train.y))
    n = X.shape[0]
    bs = cfg.batch_size
    opt = Adam(net.n_params, lr=cfg.learning_rate)
    work = _BatchWorkspace(net, bs, cfg.l2_coeff)

    history = [metric_vr(model, linear, test)]
    best, best_params, since = history[0], net.params.copy(), 0
    for _ in range(cfg.epochs_max):
        perm = rng.permutation(n)
        Xs, Ts = X[perm], T[perm]
        for a in range(0, n, bs):
            opt.update(net.params, work.gradient(Xs[a:a + bs], Ts[a:a + bs]))
        if not np.all(np.isfinite(net.params)):
            raise NumericalError("non-finite network parameters during training")
        m = metric_vr(model, linear, test)
        if not np.isfinite(m):
            raise NumericalError("non-finite test metric")
        history.append(m)
        if m < best:
            best, since = m, 0
            best_params[:] = net.params
        else:
            since += 1
            if cfg.patience is not None and since >= cfg.patience:
                break
    net.params[:] = best_params
    return best_params, history


def split_members(N: int, ratio: float, rng: np.random.Generator):
    """Random disjoint (train, test) member indices, both non-empty."""
    if N < 2:
        raise DomainError("need at least 2 members to split")
    n_train = min(max(int(round(ratio * N)), 1), N - 1)
    perm = rng.permutation(N)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def fit_conditional_mean(Q, Y, hmap: ObservationMap, noise: NoiseModel, cfg: TrainConfig,
                         rng: Optional[RngPolicy] = None, step: int = 0,
                         warm_params: Optional[np.ndarray] = None) -> ConditionalMeanModel:
    """Affine fit plus a trained residual network, gated by test-split model selection."""
    Q, Y = as_ensemble(Q), as_ensemble(Y)
    rng = RngPolicy(cfg.seed) if rng is None else rng
    linear = fit_affine(Q, Y)
    tr, te = split_members(Q.shape[0], cfg.split_ratio, rng.stream("split", step))
    aug = rng.stream("aug-noise", step)
    train = build_augmented(Q[tr], hmap, noise, cfg.M, aug, members=tr)
    test = build_augmented(Q[te], hmap, noise, cfg.M, aug, members=te)

    sizes = [Y.shape[1], *cfg.hidden, Q.shape[1]]
    net = DenseNetwork(sizes, cfg.activation)
    if warm_params is not None and warm_params.shape == (net.n_params,):
        net.params[:] = warm_params
    else:
        net.init_glorot(rng.stream("net-init", step))
    model = CorrectionNet(net, Normalizer.fit(train.y),
                          Normalizer.fit(train.q - linear(train.y)))
    _, history = train_with_callback(model, linear, train, test, cfg, rng.stream("train-shuffle", step))
    m_ann = min(history)
    m_lin = metric_vr(None, linear, test)
    return ConditionalMeanModel(linear, model, select_model(m_ann, m_lin), m_ann, m_lin)
