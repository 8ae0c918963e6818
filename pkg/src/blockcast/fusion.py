"""Softmax-weighted late fusion over any subset of modality predictors."""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ArityError, ShapeError


def softmax_weights(scores) -> np.ndarray:
    """exp(s_i) / sum_j exp(s_j), computed with max subtraction.

    Scores are validation F1 values as fractions in [0, 1].
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ArityError("softmax needs at least one member score")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    e = np.exp(scores - scores.max())
    return e / e.sum()


def fuse(member_probs, weights) -> np.ndarray:
    """Convex combination of per-member probability vectors, elementwise."""
    probs = [np.asarray(p, dtype=np.float64) for p in member_probs]
    weights = np.asarray(weights, dtype=np.float64)
    if len(probs) != len(weights):
        raise ShapeError(f"{len(probs)} members but {len(weights)} weights")
    if len(probs) == 0:
        raise ArityError("fusion needs at least one member")
    k = probs[0].shape
    for p in probs:
        if p.shape != k:
            raise ShapeError(f"probability vectors disagree: {p.shape} vs {k}")
    out = np.zeros(k)
    for w, p in zip(weights, probs):
        out += w * p
    return out


def enumerate_combinations(modalities=("camera", "gps", "lidar", "radar")):
    """All non-empty subsets, ordered by size then lexically."""
    tags = tuple(modalities)
    if len(set(tags)) != len(tags):
        raise ValueError(f"duplicate modality tags in {tags}")
    out = []
    for size in range(1, len(tags) + 1):
        out.extend(sorted(tuple(sorted(c)) for c in combinations(tags, size)))
    return out


def combo_name(tags) -> str:
    """Report name: 'camera_only' for singles, 'camera_radar' for ensembles."""
    tags = sorted(tags)
    return f"{tags[0]}_only" if len(tags) == 1 else "_".join(tags)


@dataclass(frozen=True)
class FusionEnsemble:
    """Members with their validation scores and the derived softmax weights."""

    members: tuple
    scores: tuple  # mean validation F1 per member, in [0, 1]
    weights: tuple

    @classmethod
    def from_scores(cls, members, scores) -> "FusionEnsemble":
        members = tuple(members)
        if len(members) != len(set(members)):
            raise ValueError(f"duplicate members in {members}")
        if len(members) != len(tuple(scores)):
            raise ArityError("one score per member required")
        w = softmax_weights(scores)
        return cls(members=members, scores=tuple(float(s) for s in scores),
                   weights=tuple(float(x) for x in w))

    @property
    def name(self) -> str:
        return combo_name(self.members)

    def fuse(self, member_probs) -> np.ndarray:
        return fuse(member_probs, self.weights)


def write_manifest(path, ensemble: FusionEnsemble, checkpoint_paths: dict) -> None:
    """Audit record: member checkpoints, validation F1, derived weights."""
    with open(path, "w") as f:
        f.write(f"combination={ensemble.name}\n")
        for member, score, weight in zip(ensemble.members, ensemble.scores,
                                         ensemble.weights):
            f.write(
                f"member={member} checkpoint={checkpoint_paths[member]} "
                f"val_f1={score!r} weight={weight!r}\n"
            )


def read_manifest(path):
    """Returns (combination name, [(member, checkpoint, val_f1, weight)])."""
    members = []
    name = None
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line.startswith("combination="):
                name = line.split("=", 1)[1]
                continue
            fields = dict(part.split("=", 1) for part in line.split())
            members.append(
                (fields["member"], fields["checkpoint"],
                 float(fields["val_f1"]), float(fields["weight"]))
            )
    return name, members
