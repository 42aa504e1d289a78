"""Fully-connected ReLU networks with optional BatchNorm, built on numpy.

Conventions used throughout the package:

* A network with widths ``[d0, d1, ..., dL]`` has L linear layers.  Layer
  ``l`` (1-based in prose, 0-based in the lists below) maps width ``d_{l-1}``
  to ``d_l``; weight matrices are stored as ``(d_{l-1}, d_l)`` so that
  column ``j`` is the fan-in filter of unit ``j``.
* Hidden layers apply ReLU; the top layer is linear (gate identically 1).
* The ReLU gate at exactly 0 is defined as 0, which makes the identity
  ``relu(x) == gate(x) * x`` exact in floating point.
* BatchNorm always uses the statistics of the current batch.  Under
  ``linear_relu_bn`` the order is linear -> ReLU -> BN; under
  ``linear_bn_relu`` it is linear -> BN -> ReLU.  Hidden linear layers drop
  their bias when BN is active (the BN shift c1 absorbs it).
* Gradients follow the negative convention: the stored quantities point in
  the direction that decreases the loss, and ``sgd_step`` *adds* them.
  At the top layer the per-sample node gradient is ``target - output``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateBatchError,
    NumericError,
    PreconditionError,
)

BN_MODES = ("none", "linear_relu_bn", "linear_bn_relu")
BN_EPS = 1e-8
SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: layer widths, BN placement, and per-layer bias flags."""

    layer_widths: tuple[int, ...]
    bn_mode: str = "none"
    has_bias: tuple[bool, ...] = ()

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ConfigurationError("need at least input and output widths")
        if any(w < 1 for w in widths):
            raise ConfigurationError(f"all widths must be >= 1, got {widths}")
        if self.bn_mode not in BN_MODES:
            raise ConfigurationError(f"unknown bn_mode {self.bn_mode!r}")
        n_layers = len(widths) - 1
        if not self.has_bias:
            # default: biases everywhere, except hidden layers under BN
            if self.bn_mode == "none":
                flags = (True,) * n_layers
            else:
                flags = (False,) * (n_layers - 1) + (True,)
            object.__setattr__(self, "has_bias", flags)
        else:
            flags = tuple(bool(b) for b in self.has_bias)
            if len(flags) != n_layers:
                raise ConfigurationError("has_bias needs one flag per layer")
            if self.bn_mode != "none" and any(flags[:-1]):
                raise ConfigurationError(
                    "hidden linear bias must be disabled when BN is active"
                )
            object.__setattr__(self, "has_bias", flags)

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def has_bn(self, li: int) -> bool:
        """True when 0-based layer li carries a BN site (hidden layers only)."""
        return self.bn_mode != "none" and li < self.n_layers - 1


@dataclass(frozen=True)
class Network:
    """Parameter container.  Treated as immutable; sgd_step returns a copy."""

    spec: NetworkSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray | None, ...]
    bn_c0: tuple[np.ndarray | None, ...]
    bn_c1: tuple[np.ndarray | None, ...]

    def __post_init__(self):
        widths = self.spec.layer_widths
        if len(self.weights) != self.spec.n_layers:
            raise ConfigurationError("wrong number of weight matrices")
        for li, w in enumerate(self.weights):
            if w.shape != (widths[li], widths[li + 1]):
                raise ConfigurationError(
                    f"layer {li}: weight shape {w.shape} != "
                    f"({widths[li]}, {widths[li + 1]})"
                )
            if not np.all(np.isfinite(w)):
                raise NumericError(f"layer {li}: non-finite weights")
        for li in range(self.spec.n_layers):
            b = self.biases[li]
            if self.spec.has_bias[li]:
                if b is None or b.shape != (widths[li + 1],):
                    raise ConfigurationError(f"layer {li}: bad bias vector")
                if not np.all(np.isfinite(b)):
                    raise NumericError(f"layer {li}: non-finite bias")
            elif b is not None:
                raise ConfigurationError(f"layer {li}: unexpected bias")
            c0, c1 = self.bn_c0[li], self.bn_c1[li]
            if self.spec.has_bn(li):
                for v, name in ((c0, "c0"), (c1, "c1")):
                    if v is None or v.shape != (widths[li + 1],):
                        raise ConfigurationError(f"layer {li}: bad BN {name}")
                    if not np.all(np.isfinite(v)):
                        raise NumericError(f"layer {li}: non-finite BN {name}")
            elif c0 is not None or c1 is not None:
                raise ConfigurationError(f"layer {li}: unexpected BN params")

    @property
    def n_layers(self) -> int:
        return self.spec.n_layers


def build_network(
    spec: NetworkSpec,
    weights: list[np.ndarray],
    biases: list[np.ndarray | None] | None = None,
    bn_c0: list[np.ndarray | None] | None = None,
    bn_c1: list[np.ndarray | None] | None = None,
) -> Network:
    """Assemble a Network, filling default biases (0) and BN params (1, 0)."""
    n = spec.n_layers
    widths = spec.layer_widths
    ws = tuple(np.asarray(w, dtype=np.float64) for w in weights)
    if biases is None:
        biases = [
            np.zeros(widths[li + 1]) if spec.has_bias[li] else None
            for li in range(n)
        ]
    if bn_c0 is None:
        bn_c0 = [
            np.ones(widths[li + 1]) if spec.has_bn(li) else None
            for li in range(n)
        ]
    if bn_c1 is None:
        bn_c1 = [
            np.zeros(widths[li + 1]) if spec.has_bn(li) else None
            for li in range(n)
        ]
    as_f64 = lambda v: None if v is None else np.asarray(v, dtype=np.float64)
    return Network(
        spec=spec,
        weights=ws,
        biases=tuple(as_f64(b) for b in biases),
        bn_c0=tuple(as_f64(v) for v in bn_c0),
        bn_c1=tuple(as_f64(v) for v in bn_c1),
    )


@dataclass
class BNSite:
    """Everything bn_backward needs about one BN application."""

    f_in: np.ndarray  # pre-BN activation, batch x width
    mu: np.ndarray  # batch mean per channel
    sigma: np.ndarray  # sqrt(batch var + BN_EPS) per channel
    f_tilde: np.ndarray  # whitened activation (f_in - mu) / sigma
    c0: np.ndarray  # scale in effect at forward time


@dataclass
class ForwardTrace:
    """Per-layer tensors captured during forward evaluation.

    All lists are 0-based over linear layers.  ``act`` is the ReLU output
    (the theory's f_j; equal to ``pre`` at the top layer), ``gate`` the 0/1
    ReLU derivative (ones at the top layer), and ``out`` whatever feeds the
    next layer (BN output under linear_relu_bn, otherwise ``act``).
    """

    x: np.ndarray
    pre: list[np.ndarray]
    gate: list[np.ndarray]
    act: list[np.ndarray]
    out: list[np.ndarray]
    bn: list[BNSite | None]

    @property
    def outputs(self) -> np.ndarray:
        return self.out[-1]

    @property
    def batch_size(self) -> int:
        return self.x.shape[0]

    def layer_input(self, li: int) -> np.ndarray:
        return self.x if li == 0 else self.out[li - 1]


@dataclass
class GradientSet:
    """Negative gradients for every parameter plus per-node gradients.

    ``node[li]`` holds the batch x width gradient at the linear output of
    layer li (the g_j of the gradient decomposition).  Parameter entries
    are batch means, matching a loss averaged over the batch.
    """

    node: list[np.ndarray]
    weights: list[np.ndarray]
    biases: list[np.ndarray | None]
    bn_c0: list[np.ndarray | None]
    bn_c1: list[np.ndarray | None]


def _bn_stats(f_in: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if f_in.shape[0] < 2:
        raise PreconditionError("BN needs batch size >= 2")
    mu = f_in.mean(axis=0)
    var = f_in.var(axis=0)
    sigma = np.sqrt(var + BN_EPS)
    if np.any(sigma < SIGMA_FLOOR):
        raise DegenerateBatchError("zero batch std at a BN site")
    return mu, sigma, (f_in - mu) / sigma


def forward(net: Network, batch: np.ndarray) -> ForwardTrace:
    """Evaluate the network on a batch, recording the full trace."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.spec.layer_widths[0]:
        raise ConfigurationError(
            f"batch shape {x.shape} incompatible with input width "
            f"{net.spec.layer_widths[0]}"
        )
    n_layers = net.n_layers
    mode = net.spec.bn_mode
    pre_l, gate_l, act_l, out_l, bn_l = [], [], [], [], []
    h = x
    for li in range(n_layers):
        pre = h @ net.weights[li]
        if net.biases[li] is not None:
            pre = pre + net.biases[li]
        if li == n_layers - 1:
            gate = np.ones_like(pre)
            act = pre
            out = pre
            site = None
        elif mode == "linear_bn_relu":
            mu, sigma, f_tilde = _bn_stats(pre)
            site = BNSite(pre, mu, sigma, f_tilde, net.bn_c0[li].copy())
            y = net.bn_c0[li] * f_tilde + net.bn_c1[li]
            gate = (y > 0).astype(np.float64)
            act = gate * y
            out = act
        else:
            gate = (pre > 0).astype(np.float64)
            act = gate * pre
            if mode == "linear_relu_bn":
                mu, sigma, f_tilde = _bn_stats(act)
                site = BNSite(act, mu, sigma, f_tilde, net.bn_c0[li].copy())
                out = net.bn_c0[li] * f_tilde + net.bn_c1[li]
            else:
                site = None
                out = act
        pre_l.append(pre)
        gate_l.append(gate)
        act_l.append(act)
        out_l.append(out)
        bn_l.append(site)
        h = out
    return ForwardTrace(x=x, pre=pre_l, gate=gate_l, act=act_l, out=out_l, bn=bn_l)


def bn_backward(
    g_out: np.ndarray, site: BNSite
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagate one BN site: returns (g_in, g_c0, g_c1).

    g_in is (c0 / sigma) times the projection of g_out onto the orthogonal
    complement of span{pre-BN activation, ones} over the batch, per channel,
    so it has zero batch mean and zero correlation with the activation.
    The parameter entries are batch sums of the incoming gradient (times
    the whitened activation for c0); callers averaging the loss over the
    batch divide by the batch size themselves.
    """
    if np.any(site.sigma < SIGMA_FLOOR):
        raise DegenerateBatchError("zero batch std at a BN site")
    g = np.asarray(g_out, dtype=np.float64)
    if g.shape != site.f_in.shape:
        raise PreconditionError("g_out shape does not match the BN site")
    g_c1 = g.sum(axis=0)
    g_c0 = (g * site.f_tilde).sum(axis=0)
    centered = g - g.mean(axis=0)
    # f_tilde has zero batch sum, so projecting out the ones direction and
    # then the f_tilde direction is an orthogonal projection off span{f, 1}
    ff = (site.f_tilde * site.f_tilde).sum(axis=0)
    coef = (centered * site.f_tilde).sum(axis=0) / ff
    g_in = (site.c0 / site.sigma) * (centered - site.f_tilde * coef)
    return g_in, g_c0, g_c1


def backward(
    net: Network, trace: ForwardTrace, teacher_out: np.ndarray
) -> GradientSet:
    """Manual backprop of the squared matching loss, negative convention.

    The loss is 0.5 * batch mean of ||teacher_out - outputs||^2; the top
    node gradient is teacher_out - outputs per sample.
    """
    target = np.asarray(teacher_out, dtype=np.float64)
    if target.shape != trace.outputs.shape:
        raise PreconditionError(
            f"teacher_out shape {target.shape} != outputs {trace.outputs.shape}"
        )
    n_layers = net.n_layers
    batch = trace.batch_size
    mode = net.spec.bn_mode
    node: list[np.ndarray | None] = [None] * n_layers
    gc0: list[np.ndarray | None] = [None] * n_layers
    gc1: list[np.ndarray | None] = [None] * n_layers
    node[n_layers - 1] = target - trace.outputs
    for li in range(n_layers - 1, 0, -1):
        g_up = node[li] @ net.weights[li].T  # gradient at out[li - 1]
        hi = li - 1
        if mode == "none":
            node[hi] = trace.gate[hi] * g_up
        elif mode == "linear_relu_bn":
            g_relu, s_c0, s_c1 = bn_backward(g_up, trace.bn[hi])
            gc0[hi] = s_c0 / batch
            gc1[hi] = s_c1 / batch
            node[hi] = trace.gate[hi] * g_relu
        else:  # linear_bn_relu
            g_y = trace.gate[hi] * g_up
            g_pre, s_c0, s_c1 = bn_backward(g_y, trace.bn[hi])
            gc0[hi] = s_c0 / batch
            gc1[hi] = s_c1 / batch
            node[hi] = g_pre
    gw = [trace.layer_input(li).T @ node[li] / batch for li in range(n_layers)]
    gb = [
        node[li].mean(axis=0) if net.spec.has_bias[li] else None
        for li in range(n_layers)
    ]
    return GradientSet(node=node, weights=gw, biases=gb, bn_c0=gc0, bn_c1=gc1)


def squared_loss(outputs: np.ndarray, targets: np.ndarray) -> float:
    """0.5 * batch mean of the squared output mismatch."""
    diff = np.asarray(outputs) - np.asarray(targets)
    return 0.5 * float((diff * diff).sum(axis=1).mean())


def sgd_step(net: Network, grads: GradientSet, eta: float) -> Network:
    """One gradient step: every parameter moves by +eta * its entry."""
    for arrs in (grads.weights, grads.biases, grads.bn_c0, grads.bn_c1):
        for a in arrs:
            if a is not None and not np.all(np.isfinite(a)):
                raise NumericError("non-finite gradient entries")
    step = lambda p, g: p if g is None else p + eta * g
    return Network(
        spec=net.spec,
        weights=tuple(
            net.weights[li] + eta * grads.weights[li]
            for li in range(net.n_layers)
        ),
        biases=tuple(
            step(net.biases[li], grads.biases[li]) if net.biases[li] is not None else None
            for li in range(net.n_layers)
        ),
        bn_c0=tuple(
            step(net.bn_c0[li], grads.bn_c0[li]) if net.bn_c0[li] is not None else None
            for li in range(net.n_layers)
        ),
        bn_c1=tuple(
            step(net.bn_c1[li], grads.bn_c1[li]) if net.bn_c1[li] is not None else None
            for li in range(net.n_layers)
        ),
    )


def filter_norms(net: Network) -> list[np.ndarray]:
    """Euclidean norm of each weight column per layer, biases excluded."""
    return [np.linalg.norm(w, axis=0) for w in net.weights]


def to_json(net: Network) -> dict:
    """Portable dict form: widths, bn_mode, and per-layer parameter lists."""
    layers = []
    for li in range(net.n_layers):
        entry: dict = {"w": net.weights[li].ravel(order="C").tolist()}
        if net.biases[li] is not None:
            entry["b"] = net.biases[li].tolist()
        if net.bn_c0[li] is not None:
            entry["c0"] = net.bn_c0[li].tolist()
            entry["c1"] = net.bn_c1[li].tolist()
        layers.append(entry)
    return {
        "widths": list(net.spec.layer_widths),
        "bn_mode": net.spec.bn_mode,
        "layers": layers,
    }


def from_json(data: dict) -> Network:
    """Inverse of to_json.  Weight arrays are row-major (input x output)."""
    try:
        widths = tuple(int(w) for w in data["widths"])
        bn_mode = data["bn_mode"]
        layers = data["layers"]
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed network JSON: {exc}") from exc
    if len(layers) != len(widths) - 1:
        raise ConfigurationError("layer count does not match widths")
    has_bias = tuple("b" in entry for entry in layers)
    spec = NetworkSpec(layer_widths=widths, bn_mode=bn_mode, has_bias=has_bias)
    weights, biases, c0s, c1s = [], [], [], []
    for li, entry in enumerate(layers):
        shape = (widths[li], widths[li + 1])
        w = np.asarray(entry["w"], dtype=np.float64)
        if w.size != shape[0] * shape[1]:
            raise ConfigurationError(f"layer {li}: wrong weight count")
        weights.append(w.reshape(shape, order="C"))
        biases.append(
            np.asarray(entry["b"], dtype=np.float64) if "b" in entry else None
        )
        if spec.has_bn(li):
            if "c0" not in entry or "c1" not in entry:
                raise ConfigurationError(f"layer {li}: missing BN params")
            c0s.append(np.asarray(entry["c0"], dtype=np.float64))
            c1s.append(np.asarray(entry["c1"], dtype=np.float64))
        else:
            c0s.append(None)
            c1s.append(None)
    return Network(
        spec=spec,
        weights=tuple(weights),
        biases=tuple(biases),
        bn_c0=tuple(c0s),
        bn_c1=tuple(c1s),
    )
