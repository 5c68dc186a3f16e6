"""Minibatch training loop with Adam, early stopping, and best-weight return.

One epoch shuffles the train split with a seeded generator, walks it in
batches (the last one may be short), and does forward / MSE / backward /
optimizer-step per batch; afterwards the test split is evaluated with no
update. The loop keeps a snapshot of the weights whose test loss is the
best seen and returns that snapshot, not the final weights. Everything is
a pure function of (dataset, initial model, config), so a rerun with the
same seed reproduces the history bit for bit.

Losses here are in normalized units, the quantity actually optimized;
nanometre metrics live in the evaluation module.
"""

import math

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .unet import ModelState, build_forward

OPTIMIZERS = ("adam", "sgd")


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries epoch and batch."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 150
    patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(
                f"learning_rate must be >= 0, got {self.learning_rate}")
        for name in ("batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(
                    f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(
                    f"{name} must be in (0, 1), got {getattr(self, name)}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(
                f"optimizer must be one of {OPTIMIZERS}, "
                f"got {self.optimizer!r}")


@dataclass
class AdamState:
    t: int
    m: dict
    v: dict

    @classmethod
    def fresh(cls, params):
        return cls(t=0,
                   m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})

    def copy(self):
        return AdamState(t=self.t,
                         m={k: a.copy() for k, a in self.m.items()},
                         v={k: a.copy() for k, a in self.v.items()})


def _require_gradients(params, gradients):
    for name in params:
        if gradients.get(name) is None:
            raise ValueError(f"missing gradient for {name!r}")


def sgd_step(state, gradients, learning_rate):
    """Plain descent w <- w - eta * g, the baseline update rule."""
    _require_gradients(state.params, gradients)
    for name, param in state.params.items():
        param -= learning_rate * gradients[name]
    return state


def adam_step(state, gradients, cfg):
    """Adam with bias correction; creates moment state on first use."""
    _require_gradients(state.params, gradients)
    if state.adam is None:
        state.adam = AdamState.fresh(state.params)
    opt = state.adam
    opt.t += 1
    c1 = 1.0 - cfg.beta1 ** opt.t
    c2 = 1.0 - cfg.beta2 ** opt.t
    for name, param in state.params.items():
        g = gradients[name]
        m = opt.m[name]
        v = opt.v[name]
        m += (1.0 - cfg.beta1) * (g - m)
        v += (1.0 - cfg.beta2) * (g * g - v)
        param -= (cfg.learning_rate / c1) * m / (np.sqrt(v / c2)
                                                 + cfg.epsilon)
    return state


def _split_arrays(dataset, split):
    samples = dataset.split_samples(split)
    if not samples:
        raise ValueError(f"dataset has no {split} samples")
    x = np.stack([s.input for s in samples])[:, None].astype(np.float32)
    y = np.stack([s.target for s in samples])[:, None].astype(np.float32)
    return x, y


def _batches(count, batch_size):
    for start in range(0, count, batch_size):
        yield start, min(start + batch_size, count)


def _evaluate(param_tensors, config, x, y, batch_size):
    total = 0.0
    for start, stop in _batches(len(x), batch_size):
        out = build_forward(param_tensors, config, ad.Tensor(x[start:stop]))
        diff = out.data - y[start:stop]
        total += float((diff * diff).mean()) * (stop - start)
        ad.release_graph(out)
    return total / len(x)


def train(dataset, model, cfg):
    """Fit a copy of model on dataset; returns (best state, loss history).

    history holds one (train_loss, test_loss) pair per completed epoch;
    the returned state's test loss is exactly min(history test column) and
    its epoch field records the 1-based epoch that achieved it.
    """
    train_x, train_y = _split_arrays(dataset, "train")
    test_x, test_y = _split_arrays(dataset, "test")

    work = ModelState(config=model.config,
                      params={k: p.copy() for k, p in model.params.items()},
                      norm=model.norm,
                      adam=None if model.adam is None else model.adam.copy(),
                      epoch=model.epoch)
    tensors = {name: ad.Tensor(param) for name, param in work.params.items()}
    rng = np.random.default_rng(cfg.seed)

    history = []
    best_loss = math.inf
    best = None
    since_best = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_x))
        epoch_loss = 0.0
        for start, stop in _batches(len(order), cfg.batch_size):
            idx = order[start:stop]
            ad.zero_gradients(tensors.values())
            out = build_forward(tensors, work.config, ad.Tensor(train_x[idx]))
            loss = ad.mse_loss(out, train_y[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite training loss {value} at epoch {epoch}, "
                    f"batch {start // cfg.batch_size}")
            ad.backward(loss)
            ad.release_graph(loss)
            gradients = {name: t.grad for name, t in tensors.items()}
            if cfg.optimizer == "sgd":
                sgd_step(work, gradients, cfg.learning_rate)
            else:
                adam_step(work, gradients, cfg)
            epoch_loss += value * len(idx)
        train_loss = epoch_loss / len(train_x)
        test_loss = _evaluate(tensors, work.config, test_x, test_y,
                              cfg.batch_size)
        history.append((train_loss, test_loss))
        if test_loss < best_loss:
            best_loss = test_loss
            since_best = 0
            best = ModelState(
                config=work.config,
                params={k: p.copy() for k, p in work.params.items()},
                norm=work.norm,
                adam=None if work.adam is None else work.adam.copy(),
                epoch=epoch)
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return best, history


def write_history(history, destination):
    """Emit the loss curves as CSV with a 1-based epoch column."""
    lines = ["epoch,train_loss,test_loss"]
    lines += [f"{i},{tr:.9g},{te:.9g}"
              for i, (tr, te) in enumerate(history, start=1)]
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
        return
    with open(destination, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
