"""Cross-check battery behind the `verify` CLI subcommand.

Runs the fast paths against their brute-force mirrors on random instances
and reports the maximum deviations observed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import GramWorkspace, LikelihoodWorkspace, TreeIndex, post_order, tree_gram
from .heritability import tree_moments
from .likelihood import DiffusionModel, TipLink, log_likelihood
from .oracle import oracle_dense_gram, oracle_dense_loglik
from .simulate import SimulationSpec, apply_mar_mask, random_tree, simulate_traits
from .tree import build_psi


@dataclass
class Check:
    name: str
    max_deviation: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_deviation < self.tolerance


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def render(self) -> str:
        lines = [f"{'check':<38}{'max deviation':>16}{'tolerance':>12}{'status':>9}"]
        for c in self.checks:
            status = "ok" if c.ok else "FAIL"
            lines.append(f"{c.name:<38}{c.max_deviation:>16.3e}{c.tolerance:>12.1e}{status:>9}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def _random_instance(rng, link_kind):
    n = int(rng.integers(2, 17))
    q = int(rng.integers(1, 5))
    tree = random_tree(n, rng)
    a = rng.standard_normal((q, q))
    model = DiffusionModel(
        a @ a.T + q * np.eye(q), rng.standard_normal(q), float(rng.uniform(0.3, 4.0))
    )
    if link_kind == "residual":
        b = rng.standard_normal((q, q))
        link = TipLink("residual", b @ b.T + q * np.eye(q))
    else:
        link = TipLink("degenerate")
    tm, _, _ = simulate_traits(
        SimulationSpec(model=model, link=link, tree=tree, seed=int(rng.integers(2**31)))
    )
    tm = apply_mar_mask(tm, float(rng.uniform(0, 0.9)), rng)
    return tree, tm, model, link


def run_verification(seed: int = 0, n_instances: int = 50) -> VerificationReport:
    rng = np.random.default_rng(seed)
    report = VerificationReport()

    dev_ref, dev_eng = 0.0, 0.0
    for i in range(n_instances):
        link_kind = "degenerate" if i % 2 == 0 else "residual"
        tree, tm, model, link = _random_instance(rng, link_kind)
        dense = oracle_dense_loglik(tree, tm, model, link)
        ref = log_likelihood(tree, tm, model, link)
        ws = LikelihoodWorkspace.build(TreeIndex.build(tree), tm, link)
        eng = post_order(ws, model, link).log_likelihood
        dev_ref = max(dev_ref, abs(ref - dense) / (1 + abs(dense)))
        dev_eng = max(dev_eng, abs(eng - ref) / (1 + abs(ref)))
    report.checks.append(Check("likelihood vs dense oracle", dev_ref, 1e-8))
    report.checks.append(Check("batched engine vs reference", dev_eng, 1e-9))

    dev = 0.0
    for _ in range(max(n_instances // 2, 5)):
        n = int(rng.integers(2, 65))
        q = int(rng.integers(1, 5))
        tree = random_tree(n, rng)
        kappa = float(rng.uniform(0.2, 5.0))
        a = rng.standard_normal((n, q))
        fast = tree_gram(GramWorkspace.build(TreeIndex.build(tree), kappa), a)
        dense = oracle_dense_gram(tree, kappa, a)
        dev = max(dev, float(np.abs(fast - dense).max() / (1 + np.abs(dense).max())))
    report.checks.append(Check("tree-weighted Gram vs dense solve", dev, 1e-10))

    dev = 0.0
    for _ in range(max(n_instances // 2, 5)):
        tree = random_tree(int(rng.integers(2, 129)), rng)
        m = tree_moments(tree)
        psi = build_psi(tree, 1.0).psi
        dev = max(
            dev,
            abs(m.trace_psi - np.trace(psi)) / (1 + np.trace(psi)),
            abs(m.total_sum - psi.sum()) / (1 + abs(psi.sum())),
        )
    report.checks.append(Check("tree moments vs dense Psi sums", dev, 1e-10))
    return report
