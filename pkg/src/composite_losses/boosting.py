"""Desk-scale gradient-boosting validation harness.

A synthetic three-Gaussian task (means (0,0), (2,2), (-2,2), identity
covariance, balanced classes) is fit by stump boosting on composite-loss
functional gradients: each stage searches one shared axis split over
per-feature quantile thresholds and fits the two leaf vectors to the
per-example negative gradients by least squares (their means). The
learning rate is fixed; step halving engages only when a stage would
break the monotone-training-risk invariant.

Mixture links over the zero-sum hyperplane bound some prediction
coordinates from above; stage updates are re-projected onto the
hyperplane and clipped to the validity box, and clip events are counted
because heavy clipping is how link choice shows up in the trajectories.

Everything is a pure function of (config, seed): two runs with the same
inputs produce identical ensembles, stage by stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .composite import CompositeLoss
from .errors import ConfigurationError, NumericalError
from .links import PHI_EXP, PHI_SQUARED, combine, make_link_family, phi_link
from .losses import make_log_loss
from .numerics import DEFAULT_TOLERANCES, ToleranceConfig
from .simplex import lift_array

GAUSSIAN_MEANS = np.array([[0.0, 0.0], [2.0, 2.0], [-2.0, 2.0]])

# Per-feature split candidates and the box clearance of clipped scores.
_N_THRESHOLDS = 64
_CLIP_SLACK = 1e-6
_RISK_SLACK = 1e-9


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    split: str

    @property
    def size(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class Stump:
    """An axis split with one score-increment vector per side."""

    feature: int
    threshold: float
    left: np.ndarray
    right: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        go_left = features[:, self.feature] <= self.threshold
        return np.where(go_left[:, None], self.left[None, :], self.right[None, :])


@dataclass(frozen=True)
class BoostConfig:
    rounds: int = 200
    learning_rate: float = 0.1
    seed: int = 0
    alphas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    m_train: int = 4800
    m_test: int = 1200
    tolerances: ToleranceConfig = DEFAULT_TOLERANCES

    def __post_init__(self):
        if self.rounds < 0:
            raise ConfigurationError("rounds must be nonnegative")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigurationError("learning rate must lie in (0, 1]")


@dataclass(frozen=True)
class Ensemble:
    composite_id: str
    v0: np.ndarray
    stages: tuple
    box_upper: float | None
    clip_total: int
    stopped_early_at: int | None = None


@dataclass
class StageRecord:
    round: int
    train_risk: float
    test_accuracy: float | None
    clip_count: int
    scale: float


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    mean_loss: float


def gen_gaussian_mixture(seed: int, m_train: int = 4800,
                         m_test: int = 1200) -> tuple[Dataset, Dataset]:
    """Deterministic balanced draws from the three-Gaussian task."""
    for label, m in (("m_train", m_train), ("m_test", m_test)):
        if m <= 0 or m % 3 != 0:
            raise ConfigurationError(f"{label} must be a positive multiple of 3")
    rng = np.random.default_rng(seed)

    def draw(m: int, split: str) -> Dataset:
        per_class = m // 3
        features = np.concatenate(
            [mean + rng.standard_normal((per_class, 2)) for mean in GAUSSIAN_MEANS])
        labels = np.repeat(np.arange(3), per_class)
        return Dataset(features=features, labels=labels, split=split)

    return draw(m_train, "train"), draw(m_test, "test")


def _advance(scores: np.ndarray, delta: np.ndarray,
             box_upper: float | None) -> tuple[np.ndarray, int]:
    """Apply a stage increment, then re-project and clip.

    Scores live in the first n-1 hyperplane coordinates; the implied last
    coordinate is minus their sum. Clipping caps every embedded
    coordinate at box_upper - 1e-6 and re-projection restores the
    zero-sum constraint; the two alternate (the overshoot shrinks
    geometrically) until the box holds.
    """
    scores = scores + delta
    if box_upper is None:
        return scores, 0
    cap = box_upper - _CLIP_SLACK
    embedded = np.concatenate([scores, -scores.sum(axis=1, keepdims=True)], axis=1)
    clips = 0
    for _ in range(64):
        over = embedded > cap
        if not over.any():
            break
        clips += int(over.sum())
        embedded = np.minimum(embedded, cap)
        embedded -= embedded.mean(axis=1, keepdims=True)
    else:
        embedded = np.minimum(embedded, cap)
    return embedded[:, :-1], clips


def _mean_risk(cl: CompositeLoss, scores: np.ndarray, labels: np.ndarray) -> float:
    points = cl.link.inverse_batch(scores)
    return float(cl.loss.partials_batch(points, labels).mean())


def _accuracy(cl: CompositeLoss, scores: np.ndarray, labels: np.ndarray) -> float:
    full = lift_array(cl.link.inverse_batch(scores))
    return float((full.argmax(axis=1) == labels).mean())


def _best_stump(features, residuals, thresholds, orders):
    """Least-squares stump over quantile thresholds; first best wins ties."""
    m = features.shape[0]
    best = (-np.inf, None)
    for f in range(features.shape[1]):
        order = orders[f]
        sorted_x = features[order, f]
        prefix = np.vstack([np.zeros((1, residuals.shape[1])),
                            np.cumsum(residuals[order], axis=0)])
        total = prefix[-1]
        cuts = np.searchsorted(sorted_x, thresholds[f], side="right")
        for t_idx, k in enumerate(cuts):
            if k == 0 or k == m:
                continue
            sum_left = prefix[k]
            sum_right = total - sum_left
            score = (sum_left @ sum_left) / k + (sum_right @ sum_right) / (m - k)
            if score > best[0]:
                best = (score, Stump(feature=f, threshold=float(thresholds[f][t_idx]),
                                     left=sum_left / k, right=sum_right / (m - k)))
    return best[1]


def train(cl: CompositeLoss, data: Dataset, cfg: BoostConfig,
          eval_data: Dataset | None = None) -> tuple[Ensemble, list[StageRecord]]:
    """Boost for cfg.rounds stages; returns the ensemble and its trace.

    The trace starts with a round-0 row for the initial scores. Training
    risk is non-increasing by construction: a stage whose full step would
    raise it is halved until it does not (a floored stage contributes
    nothing and is kept with scale 0).
    """
    n_tilde = cl.n - 1
    labels = data.labels
    features = data.features
    box = cl.link.box_upper
    scores = np.zeros((data.size, n_tilde))
    eval_scores = np.zeros((eval_data.size, n_tilde)) if eval_data is not None else None

    thresholds = [np.quantile(features[:, f], (np.arange(_N_THRESHOLDS) + 1)
                              / (_N_THRESHOLDS + 1)) for f in range(features.shape[1])]
    orders = [np.argsort(features[:, f], kind="stable") for f in range(features.shape[1])]

    risk = _mean_risk(cl, scores, labels)
    records = [StageRecord(round=0, train_risk=risk,
                           test_accuracy=None if eval_data is None
                           else _accuracy(cl, eval_scores, eval_data.labels),
                           clip_count=0, scale=0.0)]
    stages = []
    clip_total = 0
    stopped = None
    for t in range(1, cfg.rounds + 1):
        residuals = -cl.gradient_rows(scores, labels)
        if float(np.abs(residuals).max()) < 1e-12:
            stopped = t
            break
        stump = _best_stump(features, residuals, thresholds, orders)
        if stump is None:
            stopped = t
            break
        delta = stump.apply(features)
        scale = cfg.learning_rate
        for _ in range(50):
            cand, clips = _advance(scores, scale * delta, box)
            cand_risk = _mean_risk(cl, cand, labels)
            if cand_risk <= risk + _RISK_SLACK:
                break
            scale *= 0.5
        else:
            scale = 0.0
            cand, clips = scores, 0
            cand_risk = risk
        scores, risk = cand, cand_risk
        clip_total += clips
        stages.append((stump, scale))
        test_acc = None
        if eval_data is not None:
            eval_scores, _ = _advance(eval_scores, scale * stump.apply(eval_data.features), box)
            test_acc = _accuracy(cl, eval_scores, eval_data.labels)
        records.append(StageRecord(round=t, train_risk=risk, test_accuracy=test_acc,
                                   clip_count=clips, scale=scale))
    ensemble = Ensemble(composite_id=cl.name, v0=np.zeros(n_tilde),
                        stages=tuple(stages), box_upper=box,
                        clip_total=clip_total, stopped_early_at=stopped)
    return ensemble, records


def predict_scores(ensemble: Ensemble, features: np.ndarray) -> np.ndarray:
    """Replay the staged updates (including clipping) on new features."""
    scores = np.tile(ensemble.v0, (features.shape[0], 1))
    for stump, scale in ensemble.stages:
        scores, _ = _advance(scores, scale * stump.apply(features), ensemble.box_upper)
    return scores


def evaluate(ensemble: Ensemble, cl: CompositeLoss, data: Dataset) -> EvalResult:
    """Accuracy (argmax class, ties to the lowest index) and mean loss."""
    scores = predict_scores(ensemble, data.features)
    points = cl.link.inverse_batch(scores)
    full = lift_array(points)
    accuracy = float((full.argmax(axis=1) == data.labels).mean())
    mean_loss = float(cl.loss.partials_batch(points, data.labels).mean())
    return EvalResult(accuracy=accuracy, mean_loss=mean_loss)


def make_alpha_composite(alpha: float,
                         cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> CompositeLoss:
    """Log loss through the mixture alpha * exp-link + (1 - alpha) * square-link."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"alpha must lie in [0, 1], got {alpha!r}")
    basis = [phi_link(PHI_EXP, 3, cfg), phi_link(PHI_SQUARED, 3, cfg)]
    family = make_link_family(basis, [alpha, 1.0 - alpha], cfg, trials=1000, seed=0)
    return CompositeLoss(make_log_loss(3, cfg), combine(family, cfg), cfg)


@dataclass(frozen=True)
class SweepResult:
    rows: list
    failures: list = field(default_factory=list)


def alpha_sweep(alphas, cfg: BoostConfig) -> SweepResult:
    """Train one composite per mixture weight and tabulate the traces.

    Row fields: alpha, round, train_risk, test_accuracy, clip_count. A
    failing alpha is recorded and the sweep continues.
    """
    train_data, test_data = gen_gaussian_mixture(cfg.seed, cfg.m_train, cfg.m_test)
    rows = []
    failures = []
    for alpha in alphas:
        try:
            cl = make_alpha_composite(float(alpha), cfg.tolerances)
            _, records = train(cl, train_data, cfg, eval_data=test_data)
        except NumericalError as exc:
            failures.append((float(alpha), str(exc)))
            continue
        for record in records:
            rows.append({"alpha": float(alpha), "round": record.round,
                         "train_risk": record.train_risk,
                         "test_accuracy": record.test_accuracy,
                         "clip_count": record.clip_count})
    return SweepResult(rows=rows, failures=failures)


def bayes_mc_accuracy(samples: int = 999_999, seed: int = 20_24) -> float:
    """Monte-Carlo accuracy of the nearest-center rule on the task.

    Nearest center is the Bayes rule for balanced identity-covariance
    Gaussians, so this estimates the accuracy ceiling.
    """
    if samples % 3 != 0:
        samples -= samples % 3
    rng = np.random.default_rng(seed)
    per_class = samples // 3
    correct = 0
    for label, mean in enumerate(GAUSSIAN_MEANS):
        draws = mean + rng.standard_normal((per_class, 2))
        dists = ((draws[:, None, :] - GAUSSIAN_MEANS[None, :, :]) ** 2).sum(axis=2)
        correct += int((dists.argmin(axis=1) == label).sum())
    return correct / (3 * per_class)


def nearest_center_accuracy(data: Dataset) -> float:
    """Accuracy of the nearest-center rule on a concrete dataset."""
    dists = ((data.features[:, None, :] - GAUSSIAN_MEANS[None, :, :]) ** 2).sum(axis=2)
    return float((dists.argmin(axis=1) == data.labels).mean())
