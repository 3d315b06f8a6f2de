"""Seeded synthetic flow corpora for demos, tests, and desk-scale runs.

Flows carry class-conditional Gaussian features (a block of informative
dimensions plus pure-noise padding) between endpoint pools.  Destinations
can lean towards per-class preferred pools so graph structure carries
partial signal; sources are uniform.  Source pools are kept smaller than
destination pools so virtual-node augmentation has work to do.

``toniot_like`` mirrors the public ToN-IoT class mix (ten classes, one
dominant benign class, eight mid-size attack families and one rare one)
with 39 features.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TONIOT_CLASSES = ["normal", "scanning", "dos", "injection", "ddos",
                  "password", "xss", "ransomware", "backdoor", "mitm"]
TONIOT_SHARES = [65.07, 4.34, 4.34, 4.34, 4.34, 4.34, 4.34, 4.34, 4.34, 0.22]


@dataclass
class FlowTable:
    """Column-oriented synthetic flows ready to serialize as CSV."""

    src_ip: list[str]
    dst_ip: list[str]
    label: list[str]
    features: np.ndarray
    class_names: list[str]

    @property
    def n_rows(self) -> int:
        return len(self.src_ip)

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        d = self.features.shape[1]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["src_ip", "dst_ip", "label"] + [f"f{i}" for i in range(d)])
            for i in range(self.n_rows):
                writer.writerow([self.src_ip[i], self.dst_ip[i], self.label[i]]
                                + [repr(float(x)) for x in self.features[i]])
        return path


SCHEMA_TEXT = """\
# synthetic flow schema
src_ip=src_ip
dst_ip=dst_ip
label=label
normal_label=normal
"""


def write_schema(path: str | Path) -> Path:
    path = Path(path)
    path.write_text(SCHEMA_TEXT)
    return path


def synth_flows(n_flows: int, class_names: list[str], class_shares: list[float],
                n_features: int, seed: int, *,
                n_signal: int = 10, separation: float = 3.0, noise: float = 1.0,
                n_src: int | None = None, n_dst: int | None = None,
                dst_affinity: float = 0.5) -> FlowTable:
    """Generate ``n_flows`` labelled flows.

    ``dst_affinity`` is the probability a flow lands on its class's
    preferred destination pool rather than any destination; sources are
    always uniform.  Class shares need not be normalized.
    """
    rng = np.random.default_rng(seed)
    n_classes = len(class_names)
    if len(class_shares) != n_classes:
        raise ValueError("class_shares must match class_names")
    probs = np.asarray(class_shares, dtype=np.float64)
    probs = probs / probs.sum()
    n_signal = min(n_signal, n_features)
    if n_src is None:
        n_src = max(8, n_flows // 16)
    if n_dst is None:
        n_dst = max(12, n_flows // 8)

    labels = rng.choice(n_classes, size=n_flows, p=probs)
    centers = rng.normal(0.0, 1.0, size=(n_classes, n_signal)) * separation
    features = rng.normal(0.0, noise, size=(n_flows, n_features))
    features[:, :n_signal] += centers[labels]

    src = rng.integers(0, n_src, size=n_flows)
    # per-class preferred destination pools partition the id space
    pool_bounds = np.linspace(0, n_dst, n_classes + 1).astype(np.int64)
    preferred_lo = pool_bounds[labels]
    preferred_hi = np.maximum(pool_bounds[labels + 1], preferred_lo + 1)
    preferred = preferred_lo + rng.integers(0, 1 << 30, size=n_flows) % (preferred_hi - preferred_lo)
    anywhere = rng.integers(0, n_dst, size=n_flows)
    dst = np.where(rng.random(n_flows) < dst_affinity, preferred, anywhere)

    return FlowTable(
        src_ip=[f"10.0.{i // 256}.{i % 256}" for i in src],
        dst_ip=[f"172.16.{i // 256}.{i % 256}" for i in dst],
        label=[class_names[c] for c in labels],
        features=features,
        class_names=list(class_names),
    )


def toniot_like(n_flows: int, seed: int, **kwargs) -> FlowTable:
    """ToN-IoT-shaped corpus: 10 classes at the published mix, 39 features.

    Signal spans every feature dimension by default; the short optimization
    budget of a two-epoch protocol needs densely informative features.
    """
    kwargs.setdefault("n_signal", 39)
    return synth_flows(n_flows, TONIOT_CLASSES, TONIOT_SHARES,
                       n_features=39, seed=seed, **kwargs)


def two_class(n_flows: int, seed: int, *, imbalance: float = 0.9,
              n_features: int = 10, **kwargs) -> FlowTable:
    """Benign-vs-attack corpus with every feature informative by default."""
    return synth_flows(n_flows, ["normal", "attack"], [imbalance, 1.0 - imbalance],
                       n_features=n_features, seed=seed,
                       n_signal=kwargs.pop("n_signal", n_features), **kwargs)
