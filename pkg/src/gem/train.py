"""Masked-language-model pretraining, multi-task fine-tuning, Adam, and
bit-exact checkpointing.

Every random draw is derived from (seed, phase constant, epoch, step), so a
run is fully determined by (seed, config, corpus) and training can resume
from a checkpoint bitwise-identically to the uninterrupted run.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import evaluation, text
from .autograd import Parameter, Tensor
from .errors import (
    CheckpointError,
    ConfigurationError,
    IncompatibilityError,
    TrainingAborted,
    ValidationError,
)
from .model import GemModel, ModelConfig, build_variant
from .text import MASK_ID, PairDataset, make_batch

_CKPT_MAGIC = b"GEMCKPT1"

# rng stream tags so independent phases never share a stream
_S_SHUFFLE, _S_DROPOUT, _S_MLM_PICK, _S_MLM_DROP = 11, 13, 17, 19


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    loss_weights: tuple = (1.0, 1.0)
    seed: int = 0
    mlm_rate: float = 0.15
    mlm_split: tuple = (0.8, 0.1, 0.1)

    def validate(self):
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if not 0.0 <= self.mlm_rate <= 1.0:
            raise ConfigurationError("mlm_rate must be in [0, 1]")
        if abs(sum(self.mlm_split) - 1.0) > 1e-9 or len(self.mlm_split) != 3:
            raise ConfigurationError("mlm_split must be three fractions summing to 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")


class Adam:
    """Bias-corrected Adam over a name->Parameter mapping."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise ValidationError(f"non-finite gradient for parameter {name}")
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        ag.zero_grads(self.params.values())

    def state(self):
        return {
            "t": self.t,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state(self, state):
        if set(state["m"]) != set(self.m):
            raise IncompatibilityError("optimizer state does not match parameters")
        self.t = int(state["t"])
        self.m = {k: v.copy() for k, v in state["m"].items()}
        self.v = {k: v.copy() for k, v in state["v"].items()}


def adam_step(params, lr, betas=(0.9, 0.999), eps=1e-8, state=None):
    """One functional Adam update; returns the optimizer for chaining."""
    opt = state if state is not None else Adam(params, lr, betas, eps)
    opt.step()
    return opt


# ---- masked-language-model pretraining ---------------------------------------


def mlm_corrupt(batch, vocab, config, step_seed):
    """Select non-special, non-concept tokens at mlm_rate and corrupt them.

    Draw order (all from default_rng([seed, tag, step_seed])): selection
    uniforms, category uniforms, replacement token ids. Selected tokens become
    [MASK] / a random content token / unchanged per config.mlm_split.
    Returns (corrupted ids, target positions (n, 2), target ids).
    """
    if not 0.0 <= config.mlm_rate <= 1.0:
        raise ConfigurationError("mlm_rate must be in [0, 1]")
    ids = batch.ids
    rng = np.random.default_rng([config.seed, _S_MLM_PICK, step_seed])
    eligible = ids >= vocab.n_reserved
    pick = (rng.random(ids.shape) < config.mlm_rate) & eligible
    category = rng.random(ids.shape)
    lo = vocab.n_reserved
    random_ids = rng.integers(lo, len(vocab), size=ids.shape)
    p_mask, p_random, _ = config.mlm_split
    corrupted = ids.copy()
    as_mask = pick & (category < p_mask)
    as_random = pick & (category >= p_mask) & (category < p_mask + p_random)
    corrupted[as_mask] = MASK_ID
    corrupted[as_random] = random_ids[as_random]
    positions = np.argwhere(pick)
    targets = ids[pick]
    return corrupted, positions, targets


def task_adaptive_pretrain(model, items, vocab, config, slex, glex):
    """Pretrain both encoders (or the shared one) on their own view streams."""
    from .knowledge import build_views

    views = [build_views(it.item.text, slex, glex) for it in items]
    s_texts = [v.symptom_view for v in views]
    g_texts = [v.gender_view for v in views]
    max_len = model.config.max_len
    losses = {}
    if model.s_encoder is not None:
        losses["s_encoder"] = mlm_pretrain(model.s_encoder, s_texts, vocab, config)
        losses["g_encoder"] = mlm_pretrain(model.g_encoder, g_texts, vocab, config)
    elif model.encoder is not None:
        stream = (
            g_texts if model.config.variant == "stl_gender"
            else s_texts if model.config.variant == "stl_symptom"
            else s_texts + g_texts
        )
        losses["encoder"] = mlm_pretrain(model.encoder, stream, vocab, config)
    return losses


def mlm_pretrain(encoder, texts, vocab, config):
    """Masked-token prediction with a tied-embedding output projection.

    The projection reuses the encoder's token embedding (plus a temporary
    output bias that is discarded); the encoder is updated in place and the
    per-epoch mean losses are returned.
    """
    config.validate()
    seqs = [text.encode(t, vocab, encoder.config.max_len) for t in texts]
    if len(seqs) < config.batch_size:
        raise ConfigurationError(
            f"corpus of {len(seqs)} items is smaller than one batch "
            f"({config.batch_size})"
        )
    out_bias = Parameter(np.zeros(len(vocab)), f"{encoder.name}.mlm_out_bias")
    params = {p.name: p for p in encoder.parameters()}
    params[out_bias.name] = out_bias
    opt = Adam(params, lr=config.lr, betas=config.betas, eps=config.eps)
    n = len(seqs)
    step = 0
    epoch_losses = []
    for epoch in range(config.epochs):
        order = np.random.default_rng(
            [config.seed, _S_SHUFFLE, epoch]
        ).permutation(n)
        losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            batch = make_batch([seqs[i] for i in idx])
            corrupted, positions, targets = mlm_corrupt(batch, vocab, config, step)
            step += 1
            if len(targets) == 0:
                continue
            rng = np.random.default_rng([config.seed, _S_MLM_DROP, step])
            h = encoder(corrupted, batch.pad_mask, train=True, rng=rng)
            picked = h[positions[:, 0], positions[:, 1]]
            logits = picked @ ag.transpose(encoder.tok_emb, (1, 0)) + out_bias
            loss = ag.cross_entropy_loss(logits, targets)
            if not np.isfinite(loss.data):
                raise TrainingAborted("non-finite pretraining loss", step=step)
            opt.zero_grad()
            ag.backward(loss)
            opt.step()
            losses.append(float(loss.data))
        epoch_losses.append(float(np.mean(losses)) if losses else 0.0)
    return epoch_losses


# ---- multi-task fine-tuning ----------------------------------------------------


@dataclass
class TrainResult:
    model: GemModel
    trace: list
    best_epoch: int | None
    best_metric: float | None
    optimizer: "Adam" = None
    final_state: dict = None
    best_state: dict = None
    epochs_done: int = 0

    def resume_extra(self):
        """Header payload for a checkpoint this run can be resumed from."""
        return {
            "next_epoch": self.epochs_done,
            "trace": self.trace,
            "best_metric": self.best_metric,
            "best_epoch": self.best_epoch,
        }


def _task_weights(model, config):
    w_s, w_g = config.loss_weights
    variant = model.config.variant
    if variant == "stl_symptom":
        w_g = 0.0
    elif variant == "stl_gender":
        w_s = 0.0
    return w_s, w_g


def _batch_loss(model, batch, w_s, w_g, train, rng):
    pred = model.forward(batch, train=train, rng=rng)
    loss = Tensor(0.0)
    if w_s:
        loss = loss + Tensor(w_s) * ag.cross_entropy_loss(
            pred.symptom_logits, batch.symptom.symptom_labels
        )
    if w_g:
        loss = loss + Tensor(w_g) * ag.cross_entropy_loss(
            pred.gender_logits, batch.gender.gender_labels
        )
    return loss, pred


def predict_dataset(model, ds, batch_size=64):
    """Evaluation-mode argmax predictions (symptom ids, gender ids)."""
    sy, gd = [], []
    has_sy = has_gd = False
    for lo in range(0, len(ds), batch_size):
        batch = ds.batch(range(lo, min(lo + batch_size, len(ds))))
        with ag.no_grad():
            pred = model.forward(batch, train=False)
        if pred.has_symptom():
            has_sy = True
            sy.extend(pred.symptom_logits.data.argmax(axis=-1).tolist())
        if pred.has_gender():
            has_gd = True
            gd.extend(pred.gender_logits.data.argmax(axis=-1).tolist())
    return (sy if has_sy else None), (gd if has_gd else None)


def evaluate_split(model, ds, config, batch_size=64):
    """Eval-mode loss and per-task macro metrics over one dataset."""
    from .corpus import GENDERS, SYMPTOMS

    w_s, w_g = _task_weights(model, config)
    if ds.symptom_ids is None:
        w_s = 0.0
    if ds.gender_ids is None:
        w_g = 0.0
    losses = []
    sy_pred, gd_pred = [], []
    for lo in range(0, len(ds), batch_size):
        batch = ds.batch(range(lo, min(lo + batch_size, len(ds))))
        with ag.no_grad():
            loss, pred = _batch_loss(model, batch, w_s, w_g, train=False, rng=None)
        losses.append(float(loss.data) * batch.size)
        if pred.has_symptom() and ds.symptom_ids is not None:
            sy_pred.extend(pred.symptom_logits.data.argmax(axis=-1).tolist())
        if pred.has_gender() and ds.gender_ids is not None:
            gd_pred.extend(pred.gender_logits.data.argmax(axis=-1).tolist())
    out = {"loss": float(np.sum(losses) / len(ds)), "symptom": None, "gender": None}
    if sy_pred:
        rep = evaluation.compute_metrics(
            [SYMPTOMS[i] for i in sy_pred],
            [SYMPTOMS[i] for i in ds.symptom_ids],
            SYMPTOMS,
        )
        out["symptom"] = rep
    if gd_pred:
        rep = evaluation.compute_metrics(
            [GENDERS[i] for i in gd_pred],
            [GENDERS[i] for i in ds.gender_ids],
            GENDERS,
        )
        out["gender"] = rep
    metrics = [r.macro_f1 for r in (out["symptom"], out["gender"]) if r is not None]
    out["selection_metric"] = float(np.mean(metrics)) if metrics else None
    return out


def _require_labels(ds, model, where):
    variant = model.config.variant
    need_sy = variant != "stl_gender"
    need_gd = variant != "stl_symptom"
    if need_sy and ds.symptom_ids is None:
        raise ValidationError(f"{where} items are missing symptom labels")
    if need_gd and ds.gender_ids is None:
        raise ValidationError(f"{where} items are missing gender labels")


def mtl_finetune(model, split, slex, glex, vocab, config, resume=None,
                 early_stop=None, restore_best=True):
    """Joint training with per-epoch dev evaluation and best-dev selection.

    The weighted sum of the available task cross-entropies is minimized with
    Adam. The best-dev checkpoint (mean of available macro-F1s) is restored
    into the model at the end (restore_best=False keeps the final state in
    the model instead, e.g. before checkpointing a run to be resumed);
    without a dev set the final epoch wins. Fully deterministic per
    (seed, config, corpus); a resume from epoch k reproduces the
    uninterrupted run bitwise.
    """
    config.validate()
    max_len = model.config.max_len
    train_ds = text.make_pair_dataset(split.train, vocab, slex, glex, max_len)
    _require_labels(train_ds, model, "train")
    dev_ds = None
    if len(split.dev):
        dev_ds = text.make_pair_dataset(split.dev, vocab, slex, glex, max_len)
    w_s, w_g = _task_weights(model, config)
    if w_s == 0.0 and w_g == 0.0:
        raise ConfigurationError("both task loss weights are zero")
    n = len(train_ds)
    n_batches = (n + config.batch_size - 1) // config.batch_size

    start_epoch = 0
    best_state = None
    best_metric = None
    best_epoch = None
    opt = Adam(model.parameters(), lr=config.lr, betas=config.betas, eps=config.eps)
    trace = []
    if resume is not None:
        model.load_state(resume.params)
        opt.load_state(resume.optimizer)
        start_epoch = int(resume.extra["next_epoch"])
        trace = list(resume.extra.get("trace", []))
        best_metric = resume.extra.get("best_metric")
        best_epoch = resume.extra.get("best_epoch")
        if resume.best_params is not None:
            best_state = {k: v.copy() for k, v in resume.best_params.items()}

    epochs_done = start_epoch
    for epoch in range(start_epoch, config.epochs):
        order = np.random.default_rng(
            [config.seed, _S_SHUFFLE, epoch]
        ).permutation(n)
        epoch_loss = 0.0
        for b in range(n_batches):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            batch = train_ds.batch(idx)
            rng = np.random.default_rng([config.seed, _S_DROPOUT, epoch, b])
            loss, _ = _batch_loss(model, batch, w_s, w_g, train=True, rng=rng)
            if not np.isfinite(loss.data):
                raise TrainingAborted(
                    f"non-finite loss at epoch {epoch} batch {b}",
                    step=epoch * n_batches + b,
                )
            opt.zero_grad()
            ag.backward(loss)
            opt.step()
            epoch_loss += float(loss.data) * len(idx)
        entry = {"epoch": epoch, "train_loss": epoch_loss / n}
        if dev_ds is not None:
            dev = evaluate_split(model, dev_ds, config)
            entry["dev_loss"] = dev["loss"]
            entry["selection_metric"] = dev["selection_metric"]
            for task in ("symptom", "gender"):
                rep = dev[task]
                if rep is not None:
                    entry[f"dev_{task}_precision"] = rep.macro_precision
                    entry[f"dev_{task}_recall"] = rep.macro_recall
                    entry[f"dev_{task}_f1"] = rep.macro_f1
            metric = dev["selection_metric"]
            if metric is not None and (best_metric is None or metric > best_metric):
                best_metric = metric
                best_epoch = epoch
                best_state = model.state()
        trace.append(entry)
        epochs_done = epoch + 1
        if early_stop is not None and early_stop(entry):
            break
    final_state = model.state()
    if restore_best and best_state is not None:
        model.load_state(best_state)
    return TrainResult(model=model, trace=trace, best_epoch=best_epoch,
                       best_metric=best_metric, optimizer=opt,
                       final_state=final_state, best_state=best_state,
                       epochs_done=epochs_done)


# ---- checkpointing ---------------------------------------------------------------


@dataclass
class Checkpoint:
    model_config: dict
    params: dict
    optimizer: dict
    vocab_hash: str
    extra: dict = field(default_factory=dict)
    best_params: dict | None = None


def _pack_arrays(names, arrays):
    blobs = []
    for name in names:
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        blobs.append(a.tobytes())
    return b"".join(blobs)


def save_checkpoint(path, model_config, params, optimizer, vocab_hash,
                    extra=None, best_params=None):
    """Versioned binary container; identical state saves to identical bytes.

    `params` is the name->array state to store (for a resumable mid-run
    checkpoint, pass the final-epoch state even if the in-memory model was
    restored to its best-dev parameters).
    """
    extra = extra or {}
    names = sorted(params)
    header = {
        "format_version": 1,
        "model_config": model_config.to_dict(),
        "vocab_sha256": vocab_hash,
        "param_names": names,
        "param_shapes": {k: list(params[k].shape) for k in names},
        "adam": {"t": optimizer.t, "lr": optimizer.lr,
                 "betas": [optimizer.beta1, optimizer.beta2], "eps": optimizer.eps},
        "has_best": best_params is not None,
        "extra": extra,
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [
        _CKPT_MAGIC,
        struct.pack("<Q", len(payload)),
        payload,
        _pack_arrays(names, params),
        _pack_arrays(names, optimizer.state()["m"]),
        _pack_arrays(names, optimizer.state()["v"]),
    ]
    if best_params is not None:
        if sorted(best_params) != names:
            raise ValidationError("best_params must cover the same parameters")
        chunks.append(_pack_arrays(names, best_params))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path, vocab=None):
    """Read a checkpoint; optionally verify it matches `vocab`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_CKPT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    off = len(_CKPT_MAGIC)
    try:
        (hlen,) = struct.unpack_from("<Q", blob, off)
        off += 8
        header = json.loads(blob[off : off + hlen].decode("utf-8"))
        off += hlen
        if header["format_version"] != 1:
            raise CheckpointError(f"unsupported checkpoint version")
        names = header["param_names"]
        shapes = {k: tuple(header["param_shapes"][k]) for k in names}

        def read_arrays():
            nonlocal off
            out = {}
            for name in names:
                count = int(np.prod(shapes[name], dtype=np.int64)) if shapes[name] else 1
                nbytes = count * 8
                arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
                out[name] = arr.reshape(shapes[name]).astype(np.float64)
                off += nbytes
            return out

        params = read_arrays()
        m = read_arrays()
        v = read_arrays()
        best = read_arrays() if header.get("has_best") else None
        if off != len(blob):
            raise CheckpointError("trailing or missing bytes in checkpoint")
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint: {exc}") from exc
    if vocab is not None and vocab.sha256() != header["vocab_sha256"]:
        raise IncompatibilityError(
            "checkpoint was built against a different vocabulary"
        )
    return Checkpoint(
        model_config=header["model_config"],
        params=params,
        optimizer={"t": header["adam"]["t"], "m": m, "v": v},
        vocab_hash=header["vocab_sha256"],
        extra=header.get("extra", {}),
        best_params=best,
    )


def restore_model(checkpoint, seed=0, use_best=False):
    model = build_variant(ModelConfig.from_dict(checkpoint.model_config), seed=seed)
    state = checkpoint.best_params if (use_best and checkpoint.best_params) else checkpoint.params
    model.load_state(state)
    return model


def save_training_checkpoint(path, model, result, vocab):
    """Persist a finished (or interrupted) training run so it can be resumed
    or evaluated later; stores the final-epoch state plus the best-dev state."""
    save_checkpoint(
        path,
        model.config,
        result.final_state,
        result.optimizer,
        vocab.sha256(),
        extra=result.resume_extra(),
        best_params=result.best_state,
    )


def split_id_hash(split):
    h = hashlib.sha256()
    for part in (split.train, split.dev, split.test):
        for it in part:
            h.update(it.item.id.encode("utf-8"))
            h.update(b";")
        h.update(b"|")
    return h.hexdigest()


# ---- the weak gender labeler ---------------------------------------------------


class WeakLabeler:
    """A gender classifier over raw text (no gender masking: the labeler has
    to infer gender the hard way, like the annotation model it stands in
    for). Wraps an stl_gender model plus its vocabulary."""

    def __init__(self, model, vocab):
        if model.config.vocab_size != len(vocab):
            raise IncompatibilityError(
                "labeler vocabulary does not match the model's embedding table"
            )
        self.model = model
        self.vocab = vocab

    def predict_gender(self, texts, batch_size=64):
        from .corpus import GENDERS

        max_len = self.model.config.max_len
        seqs = [text.encode(t, self.vocab, max_len) for t in texts]
        out = []
        for lo in range(0, len(seqs), batch_size):
            chunk = seqs[lo : lo + batch_size]
            batch = text.make_paired_batch(chunk, chunk)
            with ag.no_grad():
                pred = self.model.forward(batch, train=False)
            out.extend(GENDERS[i] for i in pred.gender_logits.data.argmax(axis=-1))
        return out


def train_weak_labeler(split, vocab, model_config, train_config):
    """Fit an stl_gender model on raw (unmasked) text."""
    cfg_dict = model_config.to_dict()
    cfg_dict["variant"] = "stl_gender"
    cfg_dict["vocab_size"] = len(vocab)
    cfg = ModelConfig.from_dict(cfg_dict)
    model = build_variant(cfg, seed=train_config.seed)
    mtl_finetune(model, split, None, None, vocab, train_config)
    return WeakLabeler(model, vocab)
