"""The bi-encoder classifier: mini transformer encoders, cross-attention
fusion with a residual mapping, and the two prediction heads.

Variants:
  gem              two encoders, fusion, symptom head on the symptom-encoder
                   [CLS], gender head on the fused representation's [CLS]
  stl_symptom      one encoder + symptom head only
  stl_gender       one encoder + gender head only
  mtl_shared       one shared encoder runs both views, one head per task
  concat_ablation  two encoders, no fusion; each head reads the concatenated
                   [CLS] pair (2d -> C)

The fusion is parameter-free: scores = e_g @ e_s^T / sqrt(d), softmax over
symptom positions (pad keys excluded), values default to the symptom
encoding, and h_g = e_g + a. A `gender` value source exists for comparison;
it requires both views padded to one width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor
from .errors import ConfigurationError, ValidationError, VariantError

VARIANTS = ("gem", "stl_symptom", "stl_gender", "mtl_shared", "concat_ablation")
N_SYMPTOM_CLASSES = 4
N_GENDER_CLASSES = 2
INIT_STD = 0.02


@dataclass
class ModelConfig:
    vocab_size: int
    n_layers: int = 2
    d: int = 64
    n_heads: int = 4
    d_ffn: int = 128
    max_len: int = 64
    dropout_p: float = 0.2
    fusion_value_source: str = "symptom"
    variant: str = "gem"

    def validate(self):
        if self.d % self.n_heads != 0:
            raise ConfigurationError("d must be divisible by n_heads")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError("dropout_p must be in [0, 1)")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.fusion_value_source not in ("symptom", "gender"):
            raise ConfigurationError("fusion_value_source must be symptom or gender")
        if self.vocab_size < 5:
            raise ConfigurationError("vocab_size too small")
        if self.n_layers < 0 or self.max_len < 3:
            raise ConfigurationError("bad n_layers/max_len")

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Linear:
    def __init__(self, d_in, d_out, rng, name):
        self.w = Parameter(rng.normal(0.0, INIT_STD, size=(d_in, d_out)), f"{name}.w")
        self.b = Parameter(np.zeros(d_out), f"{name}.b")

    def __call__(self, x):
        return x @ self.w + self.b

    def parameters(self):
        return [self.w, self.b]


class LayerNorm:
    def __init__(self, d, name):
        self.gain = Parameter(np.ones(d), f"{name}.gain")
        self.bias = Parameter(np.zeros(d), f"{name}.bias")

    def __call__(self, x):
        return ag.layer_norm(x, self.gain, self.bias)

    def parameters(self):
        return [self.gain, self.bias]


class EncoderLayer:
    """Pre-norm block: x + attn(LN(x)), then x + ffn(LN(x))."""

    def __init__(self, config, rng, name):
        d = config.d
        self.config = config
        self.ln1 = LayerNorm(d, f"{name}.ln1")
        self.wq = Linear(d, d, rng, f"{name}.attn.q")
        self.wk = Linear(d, d, rng, f"{name}.attn.k")
        self.wv = Linear(d, d, rng, f"{name}.attn.v")
        self.wo = Linear(d, d, rng, f"{name}.attn.o")
        self.ln2 = LayerNorm(d, f"{name}.ln2")
        self.ffn1 = Linear(d, config.d_ffn, rng, f"{name}.ffn.inner")
        self.ffn2 = Linear(config.d_ffn, d, rng, f"{name}.ffn.outer")

    def _attention(self, x, key_bias):
        cfg = self.config
        b, t, d = x.shape
        heads, dh = cfg.n_heads, d // cfg.n_heads

        def split(h):
            return h.reshape(b, t, heads, dh).transpose(0, 2, 1, 3)

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = (q @ k.transpose(0, 1, 3, 2)) * Tensor(1.0 / math.sqrt(dh))
        scores = scores + Tensor(key_bias[:, None, None, :])
        attn = ag.stable_softmax(scores, axis=-1)
        mixed = (attn @ v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.wo(mixed)

    def __call__(self, x, key_bias, train, rng):
        p = self.config.dropout_p
        h = self._attention(self.ln1(x), key_bias)
        x = x + ag.dropout(h, p, rng, train)
        h = self.ffn2(ag.gelu(self.ffn1(self.ln2(x))))
        return x + ag.dropout(h, p, rng, train)

    def parameters(self):
        out = []
        for part in (self.ln1, self.wq, self.wk, self.wv, self.wo,
                     self.ln2, self.ffn1, self.ffn2):
            out.extend(part.parameters())
        return out


class Encoder:
    """Token + learned position embeddings through pre-norm transformer layers.

    With n_layers=0 the output is exactly the embedded input (useful as a
    sanity case), otherwise a final layer norm closes the stack.
    """

    def __init__(self, config, rng, name):
        config.validate()
        self.config = config
        self.name = name
        self.tok_emb = Parameter(
            rng.normal(0.0, INIT_STD, size=(config.vocab_size, config.d)),
            f"{name}.tok_emb",
        )
        self.pos_emb = Parameter(
            rng.normal(0.0, INIT_STD, size=(config.max_len, config.d)),
            f"{name}.pos_emb",
        )
        self.layers = [
            EncoderLayer(config, rng, f"{name}.layer{i}")
            for i in range(config.n_layers)
        ]
        self.final_ln = LayerNorm(config.d, f"{name}.final_ln") if config.n_layers else None

    def __call__(self, ids, pad_mask, train=False, rng=None):
        ids = np.asarray(ids)
        b, t = ids.shape
        if t > self.config.max_len:
            raise ValidationError(
                f"sequence length {t} exceeds max_len {self.config.max_len}"
            )
        if ids.max() >= self.config.vocab_size:
            raise ValidationError("token id out of vocabulary range")
        if train and rng is None:
            raise ValidationError("training forward requires an rng for dropout")
        x = ag.embedding(self.tok_emb, ids) + ag.embedding(self.pos_emb, np.arange(t))
        x = ag.dropout(x, self.config.dropout_p, rng, train)
        key_bias = np.where(pad_mask, 0.0, -np.inf)
        for layer in self.layers:
            x = layer(x, key_bias, train, rng)
        if self.final_ln is not None:
            x = self.final_ln(x)
        return x

    def parameters(self):
        out = [self.tok_emb, self.pos_emb]
        for layer in self.layers:
            out.extend(layer.parameters())
        if self.final_ln is not None:
            out.extend(self.final_ln.parameters())
        return out


@dataclass
class FusionOutput:
    attn_weights: Tensor  # (B, Tg, Ts), rows over non-pad keys sum to 1
    a: Tensor             # attended values, same shape as e_g
    h_g: Tensor           # e_g + a, the context-aware gender representation


def fuse(e_s, e_g, s_pad_mask, config):
    """Cross attention: the gender encoding queries the symptom encoding."""
    if e_s.shape[0] != e_g.shape[0] or e_s.shape[-1] != e_g.shape[-1]:
        raise ValidationError("fuse requires matching batch size and width d")
    d = e_s.shape[-1]
    scores = (e_g @ e_s.transpose(0, 2, 1)) * Tensor(1.0 / math.sqrt(d))
    scores = scores + Tensor(np.where(s_pad_mask, 0.0, -np.inf)[:, None, :])
    attn = ag.stable_softmax(scores, axis=-1)
    if config.fusion_value_source == "symptom":
        values = e_s
    else:
        if e_s.shape[1] != e_g.shape[1]:
            raise ValidationError(
                "fusion_value_source='gender' requires equal padded lengths"
            )
        values = e_g
    a = attn @ values
    return FusionOutput(attn_weights=attn, a=a, h_g=e_g + a)


class Prediction:
    """Per-task logits; asking a variant for a task it lacks raises."""

    def __init__(self, symptom_logits=None, gender_logits=None, fusion=None, variant=""):
        self._symptom = symptom_logits
        self._gender = gender_logits
        self.fusion = fusion
        self.variant = variant

    @property
    def symptom_logits(self):
        if self._symptom is None:
            raise VariantError(f"variant {self.variant!r} produces no symptom logits")
        return self._symptom

    @property
    def gender_logits(self):
        if self._gender is None:
            raise VariantError(f"variant {self.variant!r} produces no gender logits")
        return self._gender

    def has_symptom(self):
        return self._symptom is not None

    def has_gender(self):
        return self._gender is not None


class GemModel:
    """Parameter container + forward pass for one variant."""

    def __init__(self, config, seed=0):
        config.validate()
        self.config = config
        rng = np.random.default_rng([seed, 101])
        v = config.variant
        d = config.d
        self.s_encoder = self.g_encoder = self.encoder = None
        self.symptom_head = self.gender_head = None
        if v in ("gem", "concat_ablation"):
            self.s_encoder = Encoder(config, rng, "s_encoder")
            self.g_encoder = Encoder(config, rng, "g_encoder")
        elif v == "mtl_shared":
            self.encoder = Encoder(config, rng, "encoder")
        elif v == "stl_symptom":
            self.encoder = Encoder(config, rng, "s_encoder")
        elif v == "stl_gender":
            self.encoder = Encoder(config, rng, "g_encoder")
        head_in = 2 * d if v == "concat_ablation" else d
        if v != "stl_gender":
            self.symptom_head = Linear(head_in, N_SYMPTOM_CLASSES, rng, "symptom_head")
        if v != "stl_symptom":
            self.gender_head = Linear(head_in, N_GENDER_CLASSES, rng, "gender_head")
        names = [p.name for p in self.parameter_list()]
        if len(names) != len(set(names)):
            raise ValidationError("duplicate parameter names in model")

    # ---- parameters -----------------------------------------------------

    def parameter_list(self):
        out = []
        for enc in (self.s_encoder, self.g_encoder, self.encoder):
            if enc is not None:
                out.extend(enc.parameters())
        for head in (self.symptom_head, self.gender_head):
            if head is not None:
                out.extend(head.parameters())
        return out

    def parameters(self):
        return {p.name: p for p in self.parameter_list()}

    def num_parameters(self):
        return sum(p.data.size for p in self.parameter_list())

    def zero_grad(self):
        ag.zero_grads(self.parameter_list())

    def load_state(self, state):
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValidationError(
                f"parameter name mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
            )
        for name, p in params.items():
            if p.data.shape != state[name].shape:
                raise ValidationError(f"shape mismatch for {name}")
            p.data = state[name].astype(np.float64).copy()

    def state(self):
        return {name: p.data.copy() for name, p in self.parameters().items()}

    # ---- forward ---------------------------------------------------------

    def forward(self, batch, train=False, rng=None):
        """batch is a text.PairedBatch; returns a Prediction."""
        v = self.config.variant
        s, g = batch.symptom, batch.gender
        if v == "gem":
            e_s = self.s_encoder(s.ids, s.pad_mask, train, rng)
            e_g = self.g_encoder(g.ids, g.pad_mask, train, rng)
            fo = fuse(e_s, e_g, s.pad_mask, self.config)
            return Prediction(
                symptom_logits=self.symptom_head(e_s[:, 0, :]),
                gender_logits=self.gender_head(fo.h_g[:, 0, :]),
                fusion=fo,
                variant=v,
            )
        if v == "concat_ablation":
            e_s = self.s_encoder(s.ids, s.pad_mask, train, rng)
            e_g = self.g_encoder(g.ids, g.pad_mask, train, rng)
            cat = ag.concat([e_s[:, 0, :], e_g[:, 0, :]], axis=-1)
            return Prediction(
                symptom_logits=self.symptom_head(cat),
                gender_logits=self.gender_head(cat),
                variant=v,
            )
        if v == "mtl_shared":
            e_s = self.encoder(s.ids, s.pad_mask, train, rng)
            e_g = self.encoder(g.ids, g.pad_mask, train, rng)
            return Prediction(
                symptom_logits=self.symptom_head(e_s[:, 0, :]),
                gender_logits=self.gender_head(e_g[:, 0, :]),
                variant=v,
            )
        if v == "stl_symptom":
            e_s = self.encoder(s.ids, s.pad_mask, train, rng)
            return Prediction(symptom_logits=self.symptom_head(e_s[:, 0, :]), variant=v)
        if v == "stl_gender":
            e_g = self.encoder(g.ids, g.pad_mask, train, rng)
            return Prediction(gender_logits=self.gender_head(e_g[:, 0, :]), variant=v)
        raise ConfigurationError(f"unknown variant {v!r}")

    def encode_symptom_cls(self, batch):
        """Evaluation-mode symptom-encoder [CLS] vectors as a plain array."""
        if self.config.variant == "stl_gender":
            raise VariantError("variant 'stl_gender' has no symptom encoder")
        enc = self.s_encoder if self.s_encoder is not None else self.encoder
        s = batch.symptom
        with ag.no_grad():
            e_s = enc(s.ids, s.pad_mask, train=False)
        return e_s.data[:, 0, :].copy()


def build_variant(config, seed=0):
    """Construct the model family selected by config.variant."""
    return GemModel(config, seed=seed)
