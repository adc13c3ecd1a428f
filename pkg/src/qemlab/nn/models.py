"""Surrogate mitigation models: NNAS and its NEA / NNA ablations.

All three share the feature embedding. NNAS and NEA share the recurrent
accumulator and the survival-product readout

    ŷ_l = ỹ_l / (prod_{j<=l} (1 - p̂_j) + r̂_l) + b_l

and differ in how ``r̂_l`` is read from the hidden state. NNA predicts ``ŷ``
directly with a per-layer MLP.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Tensor, as_tensor, concat, parameter, stack

KINDS = ("NNAS", "NEA", "NNA")
DENOMINATOR_FLOOR = 1e-6
CHECKPOINT_FORMAT = "qemlab-surrogate"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Variable:
    name: str
    form: str  # "sd" single discrete, "sc" single continuous, "md" multi-discrete
    size: int = 1

    def __post_init__(self):
        if self.form not in ("sd", "sc", "md"):
            raise ValueError(f"undeclared variable form {self.form!r} for {self.name}")
        if self.form != "md" and self.size != 1:
            raise ValueError("only multi-discrete variables have size > 1")


@dataclass(frozen=True)
class FeatureSpec:
    variables: tuple[Variable, ...]
    include_noisy: bool = True

    @property
    def raw_width(self) -> int:
        return sum(v.size for v in self.variables)

    @property
    def rows(self) -> int:
        return len(self.variables) + int(self.include_noisy)

    def to_json(self) -> dict:
        return {"variables": [asdict(v) for v in self.variables], "include_noisy": self.include_noisy}

    @classmethod
    def from_json(cls, data: dict) -> "FeatureSpec":
        return cls(tuple(Variable(**v) for v in data["variables"]), bool(data["include_noisy"]))


OBSERVABLE_SLOTS = 6


def task_features(include_noisy: bool = True) -> FeatureSpec:
    """Variables shared by both tasks; ``param`` is h·δt or θ, ``ratio`` is J/h (0 for GHZ)."""
    return FeatureSpec(
        (
            Variable("qubits", "sd"),
            Variable("circuit", "sd"),
            Variable("noise", "sd"),
            Variable("err1", "sc"),
            Variable("err2", "sc"),
            Variable("param", "sc"),
            Variable("ratio", "sc"),
            Variable("observable", "md", OBSERVABLE_SLOTS),
        ),
        include_noisy,
    )


@dataclass
class Batch:
    """Sequences of one common length ``L``.

    Attributes:
        raw: (B, raw_width) variable values.
        noisy: (B, L) noisy expectations.
        survival: (B, L) products ``prod_{j<=l} (1 - p̂_j)``.
        target: (B, L) noiseless expectations, if known.
    """

    raw: np.ndarray
    noisy: np.ndarray
    survival: np.ndarray
    target: Optional[np.ndarray] = None

    @property
    def length(self) -> int:
        return self.noisy.shape[1]

    @classmethod
    def from_arrays(cls, raw, noisy, p_hats, target=None) -> "Batch":
        p = np.atleast_2d(np.asarray(p_hats, dtype=float))
        return cls(
            np.atleast_2d(np.asarray(raw, dtype=float)),
            np.atleast_2d(np.asarray(noisy, dtype=float)),
            np.cumprod(1.0 - p, axis=1),
            None if target is None else np.atleast_2d(np.asarray(target, dtype=float)),
        )


@dataclass
class SurrogateModel:
    kind: str
    features: FeatureSpec
    hidden: int = 32
    max_len: int = 20
    seed: int = 0
    mlp_width: int = 32
    params: dict = field(default_factory=dict)
    last_flags: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not self.params:
            self.params = self._init_params(np.random.default_rng(self.seed))

    # construction -----------------------------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> dict:
        L, d, M = self.max_len, self.hidden, self.features.rows

        def glorot(shape, gain=1.0):
            fan = shape[0] + (shape[1] if len(shape) > 1 else 1)
            bound = gain * math.sqrt(6.0 / fan)
            return parameter(rng.uniform(-bound, bound, size=shape))

        def zeros(shape):
            return parameter(np.zeros(shape))

        p = {}
        for v in self.features.variables:
            key = f"emb.{v.name}"
            if v.form == "sd":
                p[f"{key}.w1"] = parameter(rng.normal(0.0, 0.1))
                p[f"{key}.w2"] = parameter(rng.normal(0.0, 0.5, size=L))
            elif v.form == "sc":
                p[f"{key}.w1"] = parameter(rng.normal(0.0, 0.5))
                p[f"{key}.b1"] = parameter(0.0)
                p[f"{key}.w2"] = parameter(rng.normal(0.0, 0.5, size=L))
            else:
                p[f"{key}.w2"] = parameter(rng.normal(0.0, 0.5, size=v.size))
                p[f"{key}.w1"] = parameter(rng.normal(0.0, 0.5, size=(v.size, L)))
            p[f"{key}.b"] = zeros(L)

        if self.kind == "NNA":
            widths = [M] + [self.mlp_width] * 4 + [1]
            for i, (a, b) in enumerate(zip(widths, widths[1:])):
                gain = 0.1 if i == len(widths) - 2 else 1.0
                p[f"mlp.{i}.w"] = glorot((b, a), gain)
                p[f"mlp.{i}.b"] = zeros(b)
            return p

        p["rnn.wx"] = glorot((d, M))
        p["rnn.bx"] = zeros(d)
        p["rnn.wh"] = glorot((d, d))
        p["rnn.bh"] = zeros(d)
        if self.kind == "NNAS":
            p["ext.wu"] = glorot((d, d))
            p["ext.bu"] = zeros(d)
            p["ext.wn"] = glorot((d, d))
            p["ext.bn"] = zeros(d)
            p["ext.wr"] = parameter(rng.normal(0.0, 0.01, size=d))
            p["ext.br"] = zeros(())
        else:
            p["nea.w3"] = parameter(rng.normal(0.0, 0.01, size=d))
            p["nea.b3"] = zeros(())
        p["out.b"] = zeros(L)
        return p

    def parameter_count(self) -> int:
        return int(sum(t.value.size for t in self.params.values()))

    # forward ------------------------------------------------------------------------

    def embed(self, raw: np.ndarray, noisy: Optional[np.ndarray], L: int) -> Tensor:
        """Feature matrix of shape (B, M, L)."""
        if L > self.max_len:
            raise ValueError(f"sequence length {L} exceeds the model's max_len {self.max_len}")
        raw = np.atleast_2d(raw)
        if raw.shape[1] != self.features.raw_width:
            raise ValueError(f"expected {self.features.raw_width} raw values, got {raw.shape[1]}")
        p = self.params
        rows, col = [], 0
        for v in self.features.variables:
            key = f"emb.{v.name}"
            b = p[f"{key}.b"][:L]
            if v.form == "md":
                g = Tensor(raw[:, col : col + v.size])
                row = (g * p[f"{key}.w2"]) @ p[f"{key}.w1"][:, :L] + b
            else:
                x = Tensor(raw[:, col : col + 1])
                scaled = x * p[f"{key}.w1"]
                if v.form == "sc":
                    scaled = scaled + p[f"{key}.b1"]
                row = scaled * p[f"{key}.w2"][:L] + b
            rows.append(row.reshape(raw.shape[0], 1, L))
            col += v.size
        if self.features.include_noisy:
            if noisy is None:
                raise ValueError("this model consumes the noisy row")
            rows.append(Tensor(np.asarray(noisy, dtype=float).reshape(raw.shape[0], 1, L)))
        return concat(rows, axis=1)

    def hidden_states(self, X: Tensor) -> list[Tensor]:
        p = self.params
        B, _, L = X.shape
        h = Tensor(np.zeros((B, self.hidden)))
        out = []
        for l in range(L):
            x = X[:, :, l]
            h = (x @ p["rnn.wx"].transpose() + p["rnn.bx"] + h @ p["rnn.wh"].transpose() + p["rnn.bh"]).tanh()
            out.append(h)
        return out

    def extract(self, h: Tensor, return_parts: bool = False):
        """``r̂`` from a hidden state (B, d) via the attention extractor."""
        p = self.params
        B, d = h.shape
        u = h @ p["ext.wu"].transpose() + p["ext.bu"]
        nv = h @ p["ext.wn"].transpose() + p["ext.bn"]
        scores = (u.reshape(B, d, 1) * nv.reshape(B, 1, d)) * (1.0 / math.sqrt(d))
        s = scores.softmax(axis=-1)
        a = (s @ u.reshape(B, d, 1)).reshape(B, d)
        r = a @ p["ext.wr"] + p["ext.br"]
        if return_parts:
            return r, {"U": u, "N": nv, "S": s, "A": a}
        return r

    def _readout(self, batch: Batch, r_list: list[Tensor]) -> Tensor:
        p = self.params
        L = batch.length
        den = stack(r_list, axis=1) + batch.survival
        self.last_flags = np.any(np.abs(den.value) < DENOMINATOR_FLOOR, axis=1)
        den = den.guard(DENOMINATOR_FLOOR)
        return as_tensor(batch.noisy) / den + p["out.b"][:L]

    def forward(self, batch: Batch) -> Tensor:
        """Predicted noiseless sequence, shape (B, L)."""
        L = batch.length
        X = self.embed(batch.raw, batch.noisy, L)
        if self.kind == "NNA":
            return self._mlp(X)
        hs = self.hidden_states(X)
        if self.kind == "NNAS":
            r = [self.extract(h) for h in hs]
        else:
            r = [h @ self.params["nea.w3"] + self.params["nea.b3"] for h in hs]
        return self._readout(batch, r)

    def _mlp(self, X: Tensor) -> Tensor:
        p = self.params
        B, M, L = X.shape
        z = X.transpose(0, 2, 1)  # (B, L, M), same MLP at every layer
        n_layers = len([k for k in p if k.startswith("mlp.") and k.endswith(".w")])
        for i in range(n_layers):
            z = z @ p[f"mlp.{i}.w"].transpose() + p[f"mlp.{i}.b"]
            if i < n_layers - 1:
                z = z.tanh()
        self.last_flags = np.zeros(B, dtype=bool)
        return z.reshape(B, L)

    def predict(self, batch: Batch) -> np.ndarray:
        return self.forward(batch).value.copy()

    def surrogates(self, batch: Batch) -> list[dict]:
        """Per-layer extractor internals (NNAS only), as plain arrays."""
        if self.kind != "NNAS":
            raise ValueError("surrogate internals exist only for NNAS")
        X = self.embed(batch.raw, batch.noisy, batch.length)
        out = []
        for h in self.hidden_states(X):
            _, parts = self.extract(h, return_parts=True)
            out.append({k: t.value.copy() for k, t in parts.items()})
        return out

    # persistence --------------------------------------------------------------------

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "features": self.features.to_json(),
            "hidden": self.hidden,
            "max_len": self.max_len,
            "seed": self.seed,
            "mlp_width": self.mlp_width,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.config(),
            "config_hash": self.config_hash(),
            "params": {
                k: {"shape": list(t.shape), "values": t.value.ravel().tolist()} for k, t in self.params.items()
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "SurrogateModel":
        if data.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a surrogate checkpoint")
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')}")
        cfg = dict(data["config"])
        cfg["features"] = FeatureSpec.from_json(cfg["features"])
        params = {
            k: parameter(np.asarray(v["values"], dtype=float).reshape(v["shape"])) for k, v in data["params"].items()
        }
        model = cls(params=params, **cfg)
        if data.get("config_hash") != model.config_hash():
            raise ValueError("checkpoint config hash mismatch")
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def copy(self) -> "SurrogateModel":
        return SurrogateModel.from_json(self.to_json())
