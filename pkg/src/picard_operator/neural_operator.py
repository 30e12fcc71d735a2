"""Layered neural operators with separable kernel layers, and the weight-tied construction.

A layer acts on a vector of channel functions ``v`` on the space-time grid as

    v -> sigma(W v + K v + b),   (K v)_o = sum_i mix[o, i] * K_N[v_i]

where ``K_N`` is the scalar integral operator of a kernel expansion. The
input layer instead applies the initial-layer operator to ``u0`` and the
output layer omits the activation.

The weight-tied model realizes ``Phi_N,net`` iterated ``J`` times from zero
with two channels ``(v_j, u1)``, ``u1 = S_N u0``.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .grid_field import Field, SpaceTimeGrid
from .nonlinearity_net import PwlNetwork, RequExact, export_fnet, import_fnet
from .picard_core import PicardConfig, phi_step
from .semigroup_kernel import KernelExpansion, export_expansion, import_expansion

__all__ = [
    "LayerParams",
    "NeuralOperatorModel",
    "build_weight_tied",
    "forward",
    "iterate_phi",
    "verify_equivalence",
    "relu_realization",
    "evaluate_layers",
    "ComplexityReport",
    "complexity",
    "fit_envelope",
    "export_model",
    "import_model",
]


@dataclass(frozen=True, eq=False)
class LayerParams:
    """Parameters of one layer.

    ``mix`` factors the kernel table as ``C_{n,m} = c_{n,m} * mix`` where
    ``c_{n,m}`` are the expansion coefficients; ``None`` means no nonlocal
    term. ``b_func`` holds coefficients of a function-valued bias in the
    output basis (input layer only).
    """

    W: np.ndarray
    mix: np.ndarray | None
    b: np.ndarray
    b_func: np.ndarray | None = None

    def __post_init__(self):
        W = np.atleast_2d(np.array(self.W, float))
        b = np.array(self.b, float).reshape(-1)
        if b.shape[0] != W.shape[0]:
            raise ValueError("bias length must match the layer output width")
        if self.mix is not None:
            mix = np.atleast_2d(np.array(self.mix, float))
            if mix.shape[0] != W.shape[0]:
                raise ValueError("kernel mixing matrix has the wrong output width")
            mix.setflags(write=False)
            object.__setattr__(self, "mix", mix)
        for a in (W, b):
            a.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def d_out(self) -> int:
        return self.W.shape[0]

    @property
    def d_in(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True, eq=False)
class NeuralOperatorModel:
    """The weight-tied two-channel operator.

    ``layers`` is ``[input, hidden, ..., hidden, output]``; with weight tying
    every hidden entry is the same object. The hidden layer's elementwise
    map is ``(F_net, identity)`` on the two channels.
    """

    layers: tuple[LayerParams, ...]
    expansion: KernelExpansion
    fnet: PwlNetwork | RequExact
    J: int
    grid: SpaceTimeGrid
    activation: str = "relu"
    weight_tied: bool = True

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if len(self.layers) != self.J + 1:
            raise ValueError("expected J+1 layers (input, J-1 hidden, output)")
        if self.layers[-1].d_out != 1:
            raise ValueError("output layer must have width 1")
        hidden = self.layers[1:-1]
        if self.weight_tied and any(h is not hidden[0] for h in hidden):
            raise ValueError("weight-tied model must share one hidden layer object")
        widths = [l.d_out for l in self.layers]
        for prev, layer in zip(widths, self.layers[1:]):
            if layer.d_in != prev:
                raise ValueError("layer widths are inconsistent")

    @property
    def rank(self) -> int:
        return self.expansion.rank

    @property
    def hidden(self) -> LayerParams | None:
        return self.layers[1] if self.J > 1 else None


def build_weight_tied(expansion: KernelExpansion, fnet, J: int, grid: SpaceTimeGrid,
                      activation: str | None = None) -> NeuralOperatorModel:
    """Two-channel weight-tied model computing ``Phi_N,net^[J][0]``.

    Input layer: ``(u1, u1)`` with ``u1 = K0 u0`` and bias ``<psi_m, F_net(0)>``
    (zero because ``F_net(0) = 0``). Hidden layer: ``W = [[0,1],[0,1]]`` and
    kernel table ``c * [[1,0],[0,0]]``. Output: ``W = (1, 0)``.
    """
    if J < 1:
        raise ValueError("J must be at least 1")
    if float(np.asarray(fnet(0.0))) != 0.0:
        raise ValueError("network surrogate must vanish at 0")
    activation = activation or ("requ" if isinstance(fnet, RequExact) else "relu")
    inp = LayerParams(W=np.zeros((2, 1)), mix=np.array([[1.0], [1.0]]), b=np.zeros(2),
                      b_func=np.zeros(2))
    hidden = LayerParams(W=np.array([[0.0, 1.0], [0.0, 1.0]]), mix=np.array([[1.0, 0.0], [0.0, 0.0]]),
                         b=np.zeros(2))
    out = LayerParams(W=np.array([[1.0, 0.0]]), mix=None, b=np.zeros(1))
    layers = (inp,) + (hidden,) * (J - 1) + (out,)
    expansion.bind(grid)
    return NeuralOperatorModel(layers, expansion, fnet, J, grid, activation, True)


def _finite(arr, where):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in layer {where}")
    return arr


def forward(model: NeuralOperatorModel, u0, clamp: bool = True) -> Field:
    """Evaluate the weight-tied model on an initial profile.

    Channel 1 carries the iterate ``v_j``; channel 2 carries ``u1``. The
    hidden update is ``v_{j+1} = u1 + K_N[F_net(v_j)]``.
    """
    kern = model.expansion.bind(model.grid)
    u0 = np.asarray(u0, float)
    if clamp:
        bound = getattr(model.fnet, "knots", None)
        if bound is not None:
            lim = float(bound[-1])
            if np.any(np.abs(u0) > lim):
                warnings.warn(f"initial data exceeds the certified range {lim:g}; clamped", RuntimeWarning)
                u0 = np.clip(u0, -lim, lim)
    u1 = _finite(kern.apply_initial(u0), 0)
    v = u1
    for j in range(1, model.J):
        v = _finite(u1 + kern.apply(model.fnet(v)), j)
    return Field(model.grid, v)


def iterate_phi(u0, config: PicardConfig, expansion: KernelExpansion, fnet, J: int) -> Field:
    """``Phi_N,net`` applied ``J`` times to the zero field."""
    u = Field.zeros(config.grid)
    for _ in range(J):
        u = phi_step(u, u0, config, "N_net", expansion, fnet)
    return u


def verify_equivalence(model: NeuralOperatorModel, u0, config: PicardConfig, fnet=None) -> float:
    """Max-abs gap between the model output and the iterated map."""
    ref = iterate_phi(u0, config, model.expansion, model.fnet if fnet is None else fnet, model.J)
    return float(np.max(np.abs(forward(model, u0).values - ref.values)))


# ----------------------------------------------------------------------------
# explicit ReLU realization and the generic layer evaluator


def relu_realization(model: NeuralOperatorModel) -> list[LayerParams]:
    """Rewrite the weight-tied model as plain layers with a ReLU activation.

    Each iteration becomes two layers: a hinge layer producing the ReLU units
    of ``F_net(v)`` plus the split ``relu(u1), relu(-u1)``, then a nonlocal
    layer returning ``relu(+-v_next), relu(+-u1)``. Identity channels are
    carried by the split ``z = relu(z) - relu(-z)``.
    """
    if not isinstance(model.fnet, PwlNetwork):
        raise ValueError("ReLU realization needs a piecewise-linear surrogate")
    dirs, shifts, wts = model.fnet.hinge_form()
    nh = dirs.size
    layers = []
    # input: (v, u1) = (u1, u1), no activation needed because the next layer splits
    layers.append(LayerParams(W=np.zeros((2, 1)), mix=np.array([[1.0], [1.0]]), b=np.zeros(2), b_func=np.zeros(2)))
    prev_split = False
    for _ in range(model.J - 1):
        # hinge layer
        if prev_split:
            v_cols = np.array([1.0, -1.0, 0.0, 0.0])
            u_cols = np.array([0.0, 0.0, 1.0, -1.0])
        else:
            v_cols = np.array([1.0, 0.0])
            u_cols = np.array([0.0, 1.0])
        W = np.vstack([np.outer(dirs, v_cols), u_cols, -u_cols])
        b = np.concatenate([-shifts, [0.0, 0.0]])
        layers.append(LayerParams(W=W, mix=None, b=b))
        # nonlocal layer on hinge outputs h: v_next = (h_u+ - h_u-) + K[wts . h_hinge]
        d = nh + 2
        u_read = np.zeros(d)
        u_read[nh], u_read[nh + 1] = 1.0, -1.0
        Wn = np.vstack([u_read, -u_read, u_read, -u_read])
        mixrow = np.concatenate([wts, [0.0, 0.0]])
        mix = np.vstack([mixrow, -mixrow, np.zeros(d), np.zeros(d)])
        layers.append(LayerParams(W=Wn, mix=mix, b=np.zeros(4)))
        prev_split = True
    Wout = np.array([[1.0, -1.0, 0.0, 0.0]]) if prev_split else np.array([[1.0, 0.0]])
    layers.append(LayerParams(W=Wout, mix=None, b=np.zeros(1)))
    return layers


_ACTIVATIONS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "requ": lambda z: np.maximum(z, 0.0) ** 2,
    "identity": lambda z: z,
}


def evaluate_layers(layers, expansion: KernelExpansion, grid: SpaceTimeGrid, u0, activation: str = "relu",
                    input_activation: str = "identity") -> Field:
    """Generic layered evaluator: input layer, activated hidden layers, linear output."""
    kern = expansion.bind(grid)
    sigma = _ACTIVATIONS[activation]
    u0 = np.asarray(u0, float)
    first = layers[0]
    k0 = kern.apply_initial(u0)
    chans = [first.mix[o, 0] * k0 + first.W[o, 0] * u0[None, :] + first.b[o] for o in range(first.d_out)]
    if first.b_func is not None and np.any(first.b_func):
        raise NotImplementedError("nonzero function-valued input bias")
    x = np.stack([_ACTIVATIONS[input_activation](c) for c in chans])
    for idx, layer in enumerate(layers[1:], start=1):
        pre = np.einsum("oi,itx->otx", layer.W, x) + layer.b[:, None, None]
        if layer.mix is not None:
            used = np.flatnonzero(np.any(layer.mix != 0, axis=0))
            if used.size:
                # K is linear: apply it once to the mixed sources of each output row
                for o in np.flatnonzero(np.any(layer.mix != 0, axis=1)):
                    src = np.tensordot(layer.mix[o, used], x[used], axes=1)
                    pre[o] += kern.apply(src)
        x = pre if idx == len(layers) - 1 else sigma(pre)
        _finite(x, idx)
    return Field(grid, x[0])


# ----------------------------------------------------------------------------
# complexity accounting


@dataclass(frozen=True)
class ComplexityReport:
    depth: int
    neurons: int
    rank: int
    eps: float
    bound_L: float
    bound_H: float
    C_used: float
    realized_depth: int
    J: int
    C_G: float = math.nan
    C_prime_G: float = math.nan


def _log_terms(eps: float) -> tuple[float, float]:
    lg = math.log(1.0 / eps)
    return lg**2, lg**2 / eps


def count_neurons(model: NeuralOperatorModel) -> int:
    """Total hidden-unit count of the explicit realization (all layer widths)."""
    if isinstance(model.fnet, PwlNetwork):
        return int(sum(l.d_out for l in relu_realization(model)))
    # squared-ReLU: per iteration the polynomial units plus the split identity channels
    per_iter = model.fnet.neurons + 4
    return int(2 + (model.J - 1) * per_iter + 1)


def complexity(model: NeuralOperatorModel, eps: float, C_G: float = math.nan, C_prime_G: float = math.nan,
               C: float | None = None) -> ComplexityReport:
    """Depth ``L = J L(F_net) + 2``, counted neurons and the constant they need.

    ``C_used`` is the smallest constant with ``L <= C log(1/eps)^2`` and
    ``H <= C eps^-1 log(1/eps)^2``; pass ``C`` to evaluate the bounds at a
    shared constant instead.
    """
    fnet_depth = getattr(model.fnet, "depth", 2)
    L = model.J * fnet_depth + 2
    H = count_neurons(model)
    aL, aH = _log_terms(eps)
    c_used = max(L / aL, H / aH)
    c = c_used if C is None else C
    realized = 2 * (model.J - 1) + 2 if isinstance(model.fnet, PwlNetwork) else model.J + 1
    return ComplexityReport(L, H, model.rank, eps, c * aL, c * aH, c_used, realized, model.J, C_G, C_prime_G)


def fit_envelope(reports) -> float:
    """Single constant covering every report's depth and neuron bounds."""
    return max(r.C_used for r in reports)


# ----------------------------------------------------------------------------
# export / import


def export_model(model: NeuralOperatorModel, directory) -> None:
    """Write ``manifest.txt``, ``expansion.txt`` and the surrogate table."""
    os.makedirs(directory, exist_ok=True)
    g = model.grid
    lines = [
        f"J {model.J}",
        f"N {model.rank}",
        f"activation {model.activation}",
        f"basis {model.expansion.basis_kind}",
        f"weight_tied {str(model.weight_tied).lower()}",
        f"grid {g.nt} {g.nx} {'%.17g' % g.T}",
    ]
    export_expansion(model.expansion, os.path.join(directory, "expansion.txt"))
    if isinstance(model.fnet, PwlNetwork):
        lines.append("fnet fnet.txt")
        export_fnet(model.fnet, os.path.join(directory, "fnet.txt"))
    else:
        lines.append("polynomial " + " ".join("%.17g" % c for c in model.fnet.coeffs))
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_model(directory, spec=None) -> NeuralOperatorModel:
    from .nonlinearity_net import NonlinearitySpec, build_requ_exact

    meta = {}
    with open(os.path.join(directory, "manifest.txt")) as fh:
        for line in fh:
            key, _, rest = line.strip().partition(" ")
            meta[key] = rest
    nt, nx, T = meta["grid"].split()
    grid = SpaceTimeGrid(int(nt), int(nx), float(T))
    exp = import_expansion(os.path.join(directory, "expansion.txt"), spec)
    if "fnet" in meta:
        fnet = import_fnet(os.path.join(directory, meta["fnet"]))
    else:
        coeffs = tuple(float(c) for c in meta["polynomial"].split())
        fnet = build_requ_exact(NonlinearitySpec("polynomial", max(2.0, len(coeffs) - 1), 1.0, coeffs=coeffs))
    return build_weight_tied(exp, fnet, int(meta["J"]), grid, meta["activation"])
