"""From-scratch 3-layer GraphSAGE classifier over circuit graphs.

Per layer, a node's representation is the concatenation of its own vector
with the mean of its one-hop neighbors (union of in- and out-neighbors, zero
vector when there are none) pushed through an affine map.  Layers 1 and 2
add batch normalization, ReLU, and dropout (train mode only); layer 3 emits
two raw logits per node.  Training minimizes class-weighted cross-entropy on
latch nodes with full-batch adaptive-moment descent; every gradient comes
from reverse accumulation and is checked against finite differences in the
test suite.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .graph import CircuitGraph
from .sim import FeatureMatrix, ShapeMismatch

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class EmptyMask(Exception):
    pass


class DegenerateLabels(UserWarning):
    """Raised as a warning: one class is absent, class weights fall back to 1."""


@dataclass
class BnLayer:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class Hyper:
    F: int
    H: int
    dropout: float
    seed: int


@dataclass
class SageModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    bn1: BnLayer
    bn2: BnLayer
    hyper: Hyper
    mode: str = "train"

    def train(self) -> "SageModel":
        self.mode = "train"
        return self

    def eval(self) -> "SageModel":
        self.mode = "eval"
        return self

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("W1", self.W1),
            ("b1", self.b1),
            ("W2", self.W2),
            ("b2", self.b2),
            ("W3", self.W3),
            ("b3", self.b3),
            ("bn1.gamma", self.bn1.gamma),
            ("bn1.beta", self.bn1.beta),
            ("bn2.gamma", self.bn2.gamma),
            ("bn2.beta", self.bn2.beta),
        ]

    def get_param(self, name: str) -> np.ndarray:
        for key, value in self.parameters():
            if key == name:
                return value
        raise KeyError(name)


def init_model(F: int, H: int = 64, dropout_rate: float = 0.5, seed: int = 0) -> SageModel:
    """Uniform init scaled by fan-in; deterministic under seed."""
    if F < 1 or H < 1:
        raise ValueError("feature and hidden dimensions must be at least 1")
    rng = np.random.default_rng(seed)

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    def bn(dim):
        return BnLayer(np.ones(dim), np.zeros(dim), np.zeros(dim), np.ones(dim))

    return SageModel(
        W1=uniform(2 * F, (2 * F, H)),
        b1=np.zeros(H),
        W2=uniform(2 * H, (2 * H, H)),
        b2=np.zeros(H),
        W3=uniform(2 * H, (2 * H, 2)),
        b3=np.zeros(2),
        bn1=bn(H),
        bn2=bn(H),
        hyper=Hyper(F, H, dropout_rate, seed),
    )


def _adjacency(graph: CircuitGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct-neighbor gather arrays: (srcs, dsts, per-node neighbor count).

    Neighbor sets are sorted, so the result is independent of edge list order
    and aggregation is bit-exact under neighbor permutation.
    """
    nbrs: list[set[int]] = [set() for _ in graph.nodes]
    for edge in graph.edges:
        nbrs[edge.dst].add(edge.src)
        nbrs[edge.src].add(edge.dst)
    srcs, dsts = [], []
    for node, ns in enumerate(nbrs):
        for other in sorted(ns):
            srcs.append(other)
            dsts.append(node)
    counts = np.array([max(len(ns), 1) for ns in nbrs], dtype=np.float64)
    return np.array(srcs, dtype=np.intp), np.array(dsts, dtype=np.intp), counts


def _aggregate(h: np.ndarray, adj) -> np.ndarray:
    srcs, dsts, counts = adj
    agg = np.zeros_like(h)
    if len(srcs):
        np.add.at(agg, dsts, h[srcs])
    return agg / counts[:, None]


def _aggregate_backward(d_agg: np.ndarray, adj) -> np.ndarray:
    srcs, dsts, counts = adj
    dh = np.zeros_like(d_agg)
    scaled = d_agg / counts[:, None]
    if len(srcs):
        np.add.at(dh, srcs, scaled[dsts])
    return dh


@dataclass
class ForwardPass:
    """Logits plus every intermediate needed for reverse accumulation."""

    logits: np.ndarray
    train: bool
    adj: tuple
    cache: dict = field(repr=False, default_factory=dict)


def forward(
    model: SageModel,
    features: FeatureMatrix,
    graph: CircuitGraph,
    rng: np.random.Generator | None = None,
    dropout_masks: tuple[np.ndarray, np.ndarray] | None = None,
) -> ForwardPass:
    """Run the 3 layers; in train mode batch statistics normalize and the
    running statistics are updated (momentum 0.1), eval mode uses running
    statistics and skips dropout."""
    x = np.asarray(features.values, dtype=np.float64)
    if x.shape[0] != graph.num_nodes:
        raise ShapeMismatch(
            f"features cover {x.shape[0]} nodes, graph has {graph.num_nodes}"
        )
    if x.shape[1] != model.hyper.F:
        raise ShapeMismatch(f"model expects F={model.hyper.F}, got {x.shape[1]}")
    train = model.mode == "train"
    adj = _adjacency(graph)
    cache: dict = {"x": x}

    if train and dropout_masks is None and model.hyper.dropout > 0:
        if rng is None:
            rng = np.random.default_rng(model.hyper.seed)
        keep = 1.0 - model.hyper.dropout
        dropout_masks = tuple(
            (rng.random((x.shape[0], model.hyper.H)) < keep) / keep for _ in range(2)
        )
    cache["masks"] = dropout_masks

    h = x
    for layer in (1, 2):
        W = getattr(model, f"W{layer}")
        b = getattr(model, f"b{layer}")
        bn: BnLayer = getattr(model, f"bn{layer}")
        agg = _aggregate(h, adj)
        z = np.hstack([h, agg])
        a = z @ W + b
        if train:
            mu = a.mean(axis=0)
            var = a.var(axis=0)
            bn.running_mean = (1 - BN_MOMENTUM) * bn.running_mean + BN_MOMENTUM * mu
            bn.running_var = (1 - BN_MOMENTUM) * bn.running_var + BN_MOMENTUM * var
        else:
            mu, var = bn.running_mean, bn.running_var
        std = np.sqrt(var + BN_EPS)
        xhat = (a - mu) / std
        bn_out = bn.gamma * xhat + bn.beta
        relu = np.maximum(bn_out, 0.0)
        out = relu
        if train and dropout_masks is not None:
            out = relu * dropout_masks[layer - 1]
        cache[f"l{layer}"] = {
            "h": h, "z": z, "a": a, "mu": mu, "std": std, "xhat": xhat,
            "bn_out": bn_out, "relu": relu,
        }
        h = out

    agg = _aggregate(h, adj)
    z3 = np.hstack([h, agg])
    logits = z3 @ model.W3 + model.b3
    cache["l3"] = {"h": h, "z": z3}
    return ForwardPass(logits, train, adj, cache)


def _softmax_p1(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e[:, 1] / e.sum(axis=1)


def ce_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
    weights: tuple[float, float] = (1.0, 1.0),
) -> float:
    """Class-weighted cross-entropy over masked nodes, from logits alone."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("loss mask selects no nodes")
    y = np.asarray(labels)[mask].astype(np.float64)
    w = np.where(y == 1, weights[1], weights[0])
    p1 = np.clip(_softmax_p1(np.asarray(logits)[mask]), 1e-12, 1 - 1e-12)
    return float(-(w * (y * np.log(p1) + (1 - y) * np.log(1 - p1))).mean())


def compute_loss_and_grads(
    model: SageModel,
    fwd: ForwardPass,
    labels: np.ndarray,
    mask: np.ndarray,
    weights: tuple[float, float] = (1.0, 1.0),
) -> tuple[float, dict[str, np.ndarray]]:
    """Class-weighted cross-entropy over masked (latch) nodes and gradients
    for every parameter via reverse accumulation."""
    mask = np.asarray(mask, dtype=bool)
    n_masked = int(mask.sum())
    if n_masked == 0:
        raise EmptyMask("loss mask selects no nodes")
    labels = np.asarray(labels)
    y = labels[mask].astype(np.float64)
    w = np.where(y == 1, weights[1], weights[0])
    p1 = np.clip(_softmax_p1(fwd.logits[mask]), 1e-12, 1 - 1e-12)
    loss = ce_loss(fwd.logits, labels, mask, weights)

    d_logits = np.zeros_like(fwd.logits)
    g = w * (p1 - y) / n_masked
    d_logits[mask, 1] = g
    d_logits[mask, 0] = -g

    grads: dict[str, np.ndarray] = {}
    cache = fwd.cache
    adj = fwd.adj
    z3 = cache["l3"]["z"]
    grads["W3"] = z3.T @ d_logits
    grads["b3"] = d_logits.sum(axis=0)
    dz = d_logits @ model.W3.T
    half = dz.shape[1] // 2
    dh = dz[:, :half] + _aggregate_backward(dz[:, half:], adj)

    for layer in (2, 1):
        lc = cache[f"l{layer}"]
        bn: BnLayer = getattr(model, f"bn{layer}")
        if fwd.train and cache["masks"] is not None:
            dh = dh * cache["masks"][layer - 1]
        d_bn_out = dh * (lc["bn_out"] > 0)
        grads[f"bn{layer}.gamma"] = (d_bn_out * lc["xhat"]).sum(axis=0)
        grads[f"bn{layer}.beta"] = d_bn_out.sum(axis=0)
        d_xhat = d_bn_out * bn.gamma
        if fwd.train:
            n = d_xhat.shape[0]
            a_centered = lc["a"] - lc["mu"]
            d_var = (d_xhat * a_centered).sum(axis=0) * -0.5 / lc["std"] ** 3
            d_mu = (-d_xhat / lc["std"]).sum(axis=0) + d_var * (-2.0 / n) * a_centered.sum(axis=0)
            da = d_xhat / lc["std"] + d_var * 2.0 * a_centered / n + d_mu / n
        else:
            da = d_xhat / lc["std"]
        W = getattr(model, f"W{layer}")
        grads[f"W{layer}"] = lc["z"].T @ da
        grads[f"b{layer}"] = da.sum(axis=0)
        dz = da @ W.T
        half = dz.shape[1] // 2
        dh = dz[:, :half] + _aggregate_backward(dz[:, half:], adj)
    return loss, grads


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    class_weights: tuple[float, float] | None = None  # None: N_m / (2 N_c)
    split_seed: int = 0
    train_fraction: float = 0.7

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.class_weights is not None and min(self.class_weights) <= 0:
            raise ValueError("class weights must be positive")


def _stratified_split(items, labels, fraction, seed):
    """Per-class shuffle and split; keeps at least one item per class in the
    train side and, when possible, one in the val side."""
    rng = np.random.default_rng(seed)
    train, val = [], []
    for cls in sorted(set(labels)):
        members = [it for it, lab in zip(items, labels) if lab == cls]
        order = rng.permutation(len(members))
        n_train = int(round(fraction * len(members)))
        n_train = min(max(n_train, 1), len(members) - 1) if len(members) > 1 else 1
        for rank, idx in enumerate(order):
            (train if rank < n_train else val).append(members[idx])
    return train, val


def train(
    model: SageModel,
    dataset: list[tuple[CircuitGraph, FeatureMatrix, list[int]]],
    cfg: TrainConfig,
) -> tuple[SageModel, list[dict]]:
    """Full-batch training over all latch nodes of all graphs.

    Returns the model (trained in place) and per-epoch history entries
    {"epoch", "loss", "val_accuracy"}.  Deterministic under fixed seeds.
    """
    prepared = []
    all_items, all_labels = [], []
    for g_idx, (graph, features, latch_labels) in enumerate(dataset):
        labels = np.zeros(graph.num_nodes, dtype=np.int64)
        latch_nodes = sorted(graph.latch_of)
        assert len(latch_labels) == len(latch_nodes), "one label per latch required"
        for node in latch_nodes:
            labels[node] = latch_labels[graph.latch_of[node]]
        prepared.append({"graph": graph, "features": features, "labels": labels})
        for node in latch_nodes:
            all_items.append((g_idx, node))
            all_labels.append(int(labels[node]))

    if not all_items:
        raise EmptyMask("dataset contains no latch nodes")

    train_items, val_items = _stratified_split(
        all_items, all_labels, cfg.train_fraction, cfg.split_seed
    )
    for g_idx, entry in enumerate(prepared):
        n = entry["graph"].num_nodes
        entry["train_mask"] = np.zeros(n, dtype=bool)
        entry["val_items"] = []
    for g_idx, node in train_items:
        prepared[g_idx]["train_mask"][node] = True
    for g_idx, node in val_items:
        prepared[g_idx]["val_items"].append(node)

    weights = cfg.class_weights
    if weights is None:
        train_labels = [
            int(prepared[g]["labels"][n]) for g, n in train_items
        ]
        n1 = sum(train_labels)
        n0 = len(train_labels) - n1
        if n0 == 0 or n1 == 0:
            warnings.warn(
                DegenerateLabels("only one class present; class weights set to 1")
            )
            weights = (1.0, 1.0)
        else:
            total = len(train_labels)
            weights = (total / (2.0 * n0), total / (2.0 * n1))

    adam_m = {name: np.zeros_like(p) for name, p in model.parameters()}
    adam_v = {name: np.zeros_like(p) for name, p in model.parameters()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    history: list[dict] = []

    for epoch in range(cfg.epochs):
        model.train()
        total_loss = 0.0
        total_nodes = 0
        grads_acc = {name: np.zeros_like(p) for name, p in model.parameters()}
        for g_idx, entry in enumerate(prepared):
            mask = entry["train_mask"]
            n_masked = int(mask.sum())
            if n_masked == 0:
                continue
            rng = np.random.default_rng([model.hyper.seed, epoch, g_idx])
            fwd = forward(model, entry["features"], entry["graph"], rng=rng)
            loss, grads = compute_loss_and_grads(
                model, fwd, entry["labels"], mask, weights
            )
            total_loss += loss * n_masked
            total_nodes += n_masked
            for name, g in grads.items():
                grads_acc[name] += g * n_masked
        mean_loss = total_loss / total_nodes
        step = epoch + 1
        for name, param in model.parameters():
            g = grads_acc[name] / total_nodes
            adam_m[name] = beta1 * adam_m[name] + (1 - beta1) * g
            adam_v[name] = beta2 * adam_v[name] + (1 - beta2) * g * g
            m_hat = adam_m[name] / (1 - beta1**step)
            v_hat = adam_v[name] / (1 - beta2**step)
            param -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)

        model.eval()
        correct = total = 0
        for entry in prepared:
            if not entry["val_items"]:
                continue
            fwd = forward(model, entry["features"], entry["graph"])
            pred = fwd.logits.argmax(axis=1)
            for node in entry["val_items"]:
                total += 1
                correct += int(pred[node] == entry["labels"][node])
        history.append(
            {
                "epoch": epoch,
                "loss": mean_loss,
                "val_accuracy": (correct / total) if total else None,
            }
        )
    model.eval()
    return model, history


@dataclass
class RegisterPrediction:
    index: int
    name: str
    predicted: int
    score: float


@dataclass
class PredictionReport:
    circuit_id: str
    model_id: str
    registers: list[RegisterPrediction]

    @property
    def predictions(self) -> list[int]:
        return [entry.predicted for entry in self.registers]

    def to_json(self) -> str:
        return json.dumps(
            {
                "circuit": self.circuit_id,
                "model": self.model_id,
                "registers": [
                    {
                        "index": e.index,
                        "name": e.name,
                        "predicted": e.predicted,
                        "score": e.score,
                    }
                    for e in self.registers
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "PredictionReport":
        doc = json.loads(text)
        return cls(
            doc["circuit"],
            doc.get("model", ""),
            [
                RegisterPrediction(
                    e.get("index", i), e["name"], e["predicted"], e["score"]
                )
                for i, e in enumerate(doc["registers"])
            ],
        )


def latch_display_name(reg_map, latch_pos: int) -> str:
    group = reg_map.group_of(latch_pos)
    if len(group.latches) == 1:
        return group.name
    return f"{group.name}[{group.latches.index(latch_pos)}]"


def predict_and_annotate(
    model: SageModel,
    graph: CircuitGraph,
    features: FeatureMatrix,
    reg_map,
    circuit_id: str = "circuit",
) -> PredictionReport:
    """Per-latch argmax class (ties resolve to class 0) and positive-class
    probability, back-annotated to register names."""
    assert model.mode == "eval", "prediction requires eval mode"
    fwd = forward(model, features, graph)
    p1 = _softmax_p1(fwd.logits)
    entries = []
    for node in sorted(graph.latch_of):
        pos = graph.latch_of[node]
        logits = fwd.logits[node]
        predicted = int(np.argmax(logits))  # argmax takes the lower index on ties
        entries.append(
            RegisterPrediction(
                pos, latch_display_name(reg_map, pos), predicted, float(p1[node])
            )
        )
    entries.sort(key=lambda e: e.index)
    hyper = model.hyper
    model_id = f"sage-F{hyper.F}-H{hyper.H}-seed{hyper.seed}"
    return PredictionReport(circuit_id, model_id, entries)


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    undefined: tuple[str, ...] = ()


def classification_metrics(predictions, labels) -> Metrics:
    """Binary metrics with class 1 = vulnerable; undefined ratios become 0
    and are listed in `undefined`."""
    if isinstance(predictions, PredictionReport):
        predictions = predictions.predictions
    preds = list(predictions)
    labels = list(labels)
    assert len(preds) == len(labels)
    tp = sum(1 for p, y in zip(preds, labels) if p == 1 and y == 1)
    fp = sum(1 for p, y in zip(preds, labels) if p == 1 and y == 0)
    fn = sum(1 for p, y in zip(preds, labels) if p == 0 and y == 1)
    tn = sum(1 for p, y in zip(preds, labels) if p == 0 and y == 0)
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * precision * recall, precision + recall, "f1")
    accuracy = ratio(tp + tn, len(preds), "accuracy")
    return Metrics(precision, recall, f1, accuracy, tuple(undefined))


MODEL_VERSION = 1


def model_to_json(model: SageModel) -> str:
    return json.dumps(
        {
            "version": MODEL_VERSION,
            "dims": {
                "F": model.hyper.F,
                "H": model.hyper.H,
                "dropout": model.hyper.dropout,
                "seed": model.hyper.seed,
            },
            "layers": [
                {"W": getattr(model, f"W{k}").tolist(), "b": getattr(model, f"b{k}").tolist()}
                for k in (1, 2, 3)
            ],
            "bn": [
                {
                    "gamma": bn.gamma.tolist(),
                    "beta": bn.beta.tolist(),
                    "running_mean": bn.running_mean.tolist(),
                    "running_var": bn.running_var.tolist(),
                }
                for bn in (model.bn1, model.bn2)
            ],
        }
    )


def model_from_json(text: str) -> SageModel:
    doc = json.loads(text)
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    dims = doc["dims"]
    model = init_model(dims["F"], dims["H"], dims["dropout"], dims["seed"])
    for k, layer in zip((1, 2, 3), doc["layers"]):
        setattr(model, f"W{k}", np.array(layer["W"], dtype=np.float64))
        setattr(model, f"b{k}", np.array(layer["b"], dtype=np.float64))
    for bn, entry in zip((model.bn1, model.bn2), doc["bn"]):
        bn.gamma = np.array(entry["gamma"], dtype=np.float64)
        bn.beta = np.array(entry["beta"], dtype=np.float64)
        bn.running_mean = np.array(entry["running_mean"], dtype=np.float64)
        bn.running_var = np.array(entry["running_var"], dtype=np.float64)
    return model.eval()


def save_model(model: SageModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> SageModel:
    with open(path) as fh:
        return model_from_json(fh.read())
