"""File formats: parameter documents, observation files, sample and metric
records, and the single experiment config that drives every CLI subcommand.

Field names are pinned in SCHEMA.md at the repository root. All structured
documents are JSON; record streams are JSON lines; observation and state
files hold one value per line.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .emissions import (DiscreteEmission, EmissionModel, GaussianMixtureEmission,
                        TranslatedEmission)
from .errors import ConfigError, DataError
from .gibbs import GibbsConfig, PosteriorSample
from .hmm import HmmParams, TransitionMatrix, stationary_distribution
from .priors import (DiscreteDpSpec, GaussianDpSpec, NormalInvGammaBase,
                     TruncatedDirichletSpec)


# ---------------------------------------------------------------------------
# emission payloads


def emission_to_payload(e: EmissionModel) -> dict:
    if isinstance(e, DiscreteEmission):
        return {"family": "discrete", "pmf": e.pmf.tolist()}
    if isinstance(e, GaussianMixtureEmission):
        return {"family": "gaussian_mixture", "weights": e.weights.tolist(),
                "locations": e.locations.tolist(), "scales": e.scales.tolist()}
    if isinstance(e, TranslatedEmission):
        return {"family": "translated", "shift": e.shift,
                "base": emission_to_payload(e.base)}
    raise ConfigError(f"unknown emission type {type(e).__name__}")


def emission_from_payload(payload: dict) -> EmissionModel:
    try:
        family = payload["family"]
        if family == "discrete":
            return DiscreteEmission(np.asarray(payload["pmf"], dtype=np.float64))
        if family == "gaussian_mixture":
            return GaussianMixtureEmission(np.asarray(payload["weights"], dtype=np.float64),
                                           np.asarray(payload["locations"], dtype=np.float64),
                                           np.asarray(payload["scales"], dtype=np.float64))
        if family == "translated":
            base = emission_from_payload(payload["base"])
            return TranslatedEmission(base, float(payload["shift"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad emission payload: {exc}") from exc
    raise ConfigError(f"unknown emission family {family!r}")


# ---------------------------------------------------------------------------
# parameter documents: k, q_floor, Q (row-major), mu, emissions


def params_to_payload(params: HmmParams) -> dict:
    return {
        "k": params.k,
        "q_floor": params.q_floor,
        "Q": params.trans.rows.ravel().tolist(),
        "mu": params.mu.tolist(),
        "emissions": [emission_to_payload(e) for e in params.emissions],
    }


def params_from_payload(payload: dict) -> HmmParams:
    try:
        k = int(payload["k"])
        q_floor = float(payload.get("q_floor", 0.0))
        rows = np.asarray(payload["Q"], dtype=np.float64).reshape(k, k)
        emissions = tuple(emission_from_payload(p) for p in payload["emissions"])
        trans = TransitionMatrix(rows, q_floor)
        mu = payload.get("mu", "stationary")
        if isinstance(mu, str):
            if mu != "stationary":
                raise ConfigError(f"unknown initial-law keyword {mu!r}")
            mu_vec = stationary_distribution(trans).probs
        else:
            mu_vec = np.asarray(mu, dtype=np.float64)
        return HmmParams(trans, mu_vec, emissions)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameter document: {exc}") from exc


def write_params(path, params: HmmParams) -> None:
    Path(path).write_text(json.dumps(params_to_payload(params), indent=2) + "\n")


def read_params(path) -> HmmParams:
    return params_from_payload(_read_json(path))


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"not valid JSON: {path}: {exc}") from exc


def digest(payload) -> str:
    """Hex digest of the canonical JSON encoding."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# observation / state files: one value per line


def write_observations(path, values) -> None:
    values = np.asarray(values)
    lines = [str(int(v)) if values.dtype.kind in "iu" else repr(float(v))
             for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_observations(path):
    text = Path(path)
    if not text.exists():
        raise DataError(f"missing file: {path}")
    lines = [ln.strip() for ln in text.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"empty observation file: {path}")
    try:
        if any(("." in ln) or ("e" in ln.lower()) for ln in lines):
            return np.array([float(ln) for ln in lines])
        return np.array([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise DataError(f"bad observation line in {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# posterior sample records: one JSON object per line


def sample_to_record(sample: PosteriorSample) -> dict:
    return {
        "iteration": sample.iteration,
        "chain": sample.chain_id,
        "params": params_to_payload(sample.params),
        "states": sample.states.tolist(),
    }


def write_samples(path, samples) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_record(s), sort_keys=True) + "\n")


def read_samples(path) -> list[PosteriorSample]:
    out = []
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing file: {path}")
    for ln in p.read_text().splitlines():
        if not ln.strip():
            continue
        try:
            rec = json.loads(ln)
            out.append(PosteriorSample(params=params_from_payload(rec["params"]),
                                       states=np.asarray(rec["states"], dtype=np.int64),
                                       iteration=int(rec["iteration"]),
                                       chain_id=int(rec["chain"])))
        except (KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"bad sample record in {path}: {exc}") from exc
    return out


def write_records(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# experiment config


def _prior_from_payload(payload: dict, k: int):
    try:
        trans = payload["transitions"]
        trans_spec = TruncatedDirichletSpec(np.asarray(trans["alpha"], dtype=np.float64),
                                            float(trans["q_floor"]))
        if trans_spec.k != k:
            raise ConfigError("transition prior size disagrees with k")
        emis = payload["emissions"]
        family = emis["family"]
        if family == "discrete":
            spec = DiscreteDpSpec(float(emis["alpha"]),
                                  np.asarray(emis["base"], dtype=np.float64))
        elif family == "dpm_gaussian":
            b = emis["base"]
            spec = GaussianDpSpec(float(emis["alpha"]),
                                  NormalInvGammaBase(float(b["loc"]), float(b["loc_count"]),
                                                     float(b["shape"]), float(b["scale"])),
                                  int(emis.get("truncation", 50)))
        else:
            raise ConfigError(f"unknown emission prior family {family!r}")
        return trans_spec, spec
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad prior section: {exc}") from exc


class RunConfig:
    """Parsed experiment config: sections truth, prior, gibbs, metrics,
    experiment, simulate. One document drives every subcommand."""

    def __init__(self, payload: dict):
        if "truth" not in payload:
            raise ConfigError("config needs a 'truth' section")
        self.payload = payload
        self.truth = params_from_payload(payload["truth"])
        self.trans_prior = None
        self.emission_prior = None
        if "prior" in payload:
            self.trans_prior, self.emission_prior = _prior_from_payload(
                payload["prior"], self.truth.k)
        g = payload.get("gibbs", {})
        self.gibbs_payload = g
        self.metrics = payload.get("metrics", {})
        self.experiment = payload.get("experiment", {})
        self.simulate = payload.get("simulate", {})

    def gibbs_config(self, seed: int | None = None) -> GibbsConfig:
        if self.trans_prior is None:
            raise ConfigError("config needs a 'prior' section to run the sampler")
        g = self.gibbs_payload
        mu = g.get("mu")
        return GibbsConfig(
            n_iter=int(g.get("n_iter", 3000)),
            burn_in=int(g.get("burn_in", 2000)),
            thin=int(g.get("thin", 5)),
            seed=int(g.get("seed", 0) if seed is None else seed),
            transition_prior=self.trans_prior,
            emission_prior=self.emission_prior,
            mu=None if mu is None else np.asarray(mu, dtype=np.float64),
        )

    def config_digest(self) -> str:
        return digest(self.payload)


def read_config(path) -> RunConfig:
    return RunConfig(_read_json(path))
