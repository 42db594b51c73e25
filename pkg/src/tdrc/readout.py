"""Linear readout: ridge training, per-utterance decisions and error rates."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, ridge_solve
from .masking import MaskSpec, load_mask, mask_and_encode, save_mask
from .reservoir import QuantizationModel, ReservoirParams, integrate_batch, integrate_sample


@dataclass
class TrainedModel:
    """Everything needed to classify: readout weights plus the fixed mask,
    dynamics parameters and quantization model used to produce states."""

    w_readout: np.ndarray  # Q x N
    mask: MaskSpec
    params: ReservoirParams
    quant: QuantizationModel
    ridge_lambda: float
    class_labels: list
    decision: str = "mean"  # mean | vote
    washout_frames: int = 0

    def __post_init__(self):
        if self.w_readout.shape[1] != self.params.n_nodes:
            raise ValueError(
                f"readout expects {self.w_readout.shape[1]} nodes, "
                f"params define {self.params.n_nodes}"
            )
        if self.w_readout.shape[0] != len(self.class_labels):
            raise ValueError("one readout row per class label required")
        if self.decision not in ("mean", "vote"):
            raise ValueError(f"unknown decision rule {self.decision!r}")


@dataclass(frozen=True)
class EvalReport:
    wer: float
    n_errors: int
    n_samples: int
    confusion: np.ndarray  # rows: true class, columns: predicted


def build_teacher(labels, q_classes: int) -> np.ndarray:
    """One-hot teacher matrix (Q x K): column k is 1 at frame k's class row."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be a flat sequence")
    if labels.size and (labels.min() < 0 or labels.max() >= q_classes):
        bad = labels[(labels < 0) | (labels >= q_classes)][0]
        raise ValueError(f"label {bad} out of range for {q_classes} classes")
    teacher = np.zeros((q_classes, labels.size))
    teacher[labels, np.arange(labels.size)] = 1.0
    return teacher


def train_readout(state_columns, teacher, lam: float) -> np.ndarray:
    """Ridge-regression readout from horizontally concatenated state vectors."""
    return ridge_solve(as_matrix(state_columns), as_matrix(teacher), lam)


def _drop_washout(states: np.ndarray, washout_frames: int) -> np.ndarray:
    if washout_frames > 0 and states.shape[1] > washout_frames:
        return states[:, washout_frames:]
    return states


def decide(states: np.ndarray, model: TrainedModel) -> tuple[int, np.ndarray]:
    """Reduce per-frame outputs to one decision.

    Default rule: average y(n) over the utterance, then argmax. The "vote"
    alternative takes the majority of per-frame argmaxes (ties to the lower
    index).
    """
    states = _drop_washout(states, model.washout_frames)
    outputs = model.w_readout @ states
    scores = outputs.mean(axis=1)
    if model.decision == "vote":
        votes = np.bincount(outputs.argmax(axis=0), minlength=outputs.shape[0])
        return int(votes.argmax()), scores
    return int(scores.argmax()), scores


def classify(sample, model: TrainedModel, rng_index: int = 0):
    """Run the full pipeline on one sample: mask, integrate, read out, reduce.

    Returns (label, score_vector). rng_index selects the noise sub-stream
    when quantization is active, matching the sample's lane in batched
    evaluation.
    """
    masked = mask_and_encode(sample, model.mask)
    rng = model.quant.rng_for(rng_index) if model.quant.mode == "additive_noise" else None
    states, _ = integrate_sample(masked, model.params, model.quant, rng=rng)
    idx, scores = decide(states, model)
    return model.class_labels[idx], scores


def evaluate(samples, model: TrainedModel) -> EvalReport:
    """Word error rate and confusion counts over a dataset split."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot evaluate an empty split")
    masked = [mask_and_encode(s, model.mask) for s in samples]
    states_list = integrate_batch(masked, model.params, model.quant)
    q = len(model.class_labels)
    confusion = np.zeros((q, q), dtype=np.int64)
    n_errors = 0
    for sample, states in zip(samples, states_list):
        predicted, _ = decide(states, model)
        confusion[sample.label, predicted] += 1
        if predicted != sample.label:
            n_errors += 1
    return EvalReport(
        wer=n_errors / len(samples),
        n_errors=n_errors,
        n_samples=len(samples),
        confusion=confusion,
    )


def save_model(model: TrainedModel, path) -> None:
    """JSON model file; coefficients are emitted at full decimal precision."""
    mask_doc = _mask_doc(model.mask)
    doc = {
        "class_labels": model.class_labels,
        "ridge_lambda": model.ridge_lambda,
        "decision": model.decision,
        "washout_frames": model.washout_frames,
        "w_readout_shape": list(model.w_readout.shape),
        "w_readout": model.w_readout.ravel().tolist(),
        "params": {
            "tau": model.params.tau,
            "beta": model.params.beta,
            "phi0": model.params.phi0,
            "rho": model.params.rho,
            "n_nodes": model.params.n_nodes,
            "tau_d": model.params.tau_d,
            "theta": model.params.theta,
        },
        "quant": {
            "mode": model.quant.mode,
            "level": model.quant.level,
            "seed": model.quant.seed,
            "injection_points": sorted(model.quant.injection_points),
        },
        "mask": mask_doc,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        doc = json.load(fh)
    q, n = doc["w_readout_shape"]
    return TrainedModel(
        w_readout=np.array(doc["w_readout"], dtype=np.float64).reshape(q, n),
        mask=_mask_from_doc(doc["mask"]),
        params=ReservoirParams(**doc["params"]),
        quant=QuantizationModel(
            mode=doc["quant"]["mode"],
            level=doc["quant"]["level"],
            seed=doc["quant"]["seed"],
            injection_points=frozenset(doc["quant"]["injection_points"]),
        ),
        ridge_lambda=doc["ridge_lambda"],
        class_labels=doc["class_labels"],
        decision=doc["decision"],
        washout_frames=doc["washout_frames"],
    )


def _mask_doc(mask: MaskSpec) -> dict:
    def flat(a):
        return None if a is None else a.ravel().tolist()

    return {
        "n_nodes": mask.n_nodes,
        "n_features": mask.n_features,
        "n_components": mask.n_components,
        "seed": mask.seed,
        "w_input": flat(mask.w_input),
        "w_compress": flat(mask.w_compress),
        "pca_mean": flat(mask.pca_mean),
        "w_composite": flat(mask.w_composite),
    }


def _mask_from_doc(doc: dict) -> MaskSpec:
    n, m, mp = doc["n_nodes"], doc["n_features"], doc["n_components"]

    def arr(key, shape):
        if doc[key] is None:
            return None
        return np.array(doc[key], dtype=np.float64).reshape(shape)

    return MaskSpec(
        w_input=arr("w_input", (n, m)),
        w_composite=arr("w_composite", (n, m)),
        n_nodes=n,
        n_features=m,
        w_compress=arr("w_compress", (mp, m)) if mp else None,
        pca_mean=arr("pca_mean", (m,)),
        n_components=mp,
        seed=doc["seed"],
    )


# save_mask / load_mask re-exported here for convenience alongside the model IO
__all__ = [
    "TrainedModel", "EvalReport", "build_teacher", "train_readout", "decide",
    "classify", "evaluate", "save_model", "load_model", "save_mask", "load_mask",
]
