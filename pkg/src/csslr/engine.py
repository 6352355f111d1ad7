"""Multi-criteria stepwise selection for logistic regression.

Starting from the constant model, every selection step tries to extend each
currently selected model by one variable.  A candidate is accepted only if
it is *improved* over its parent: significant new coefficient (LR test),
expected sign, acceptable VIFs, passing calibration, lower AIC and a
significant gain in AUC and/or Brier score.  Accepted candidates are trimmed
of earlier variables that stopped contributing, then the enlarged model set
is reduced to the leading model(s) and the models statistically equivalent to
them.  The loop ends when no model can be improved or after ``max_steps``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from . import glm
from .data import Dataset, DecisionMode, SelectionConfig, SignExpectation
from .glm import Direction, FittedModel, SingularMatrixError, TestResult
from .quality import (
    Placements,
    brier,
    delong_from_placements,
    placements,
    redelmeier_test,
    spiegelhalter_test,
)

log = logging.getLogger(__name__)


class TerminatedBy(str, Enum):
    NO_IMPROVEMENT = "NoImprovement"
    MAX_STEPS = "MaxSteps"


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImprovementVerdict:
    """Per-criterion outcome of comparing a candidate with its base model.

    ``auc_pass`` / ``mse_pass`` are the significant-gain flags of the two
    difference tests; ``dc_pass`` is their combination under the configured
    decision mode.  ``mse_tested`` is False when either model failed the
    calibration test, in which case the Brier comparison is not used.
    """

    improved: bool
    new_variable: str
    lr_pass: bool = False
    sign_pass: bool = False
    vif_pass: bool = False
    calib_pass: bool = False
    aic_pass: bool = False
    auc_pass: bool = False
    mse_pass: bool = False
    dc_pass: bool = False
    p_lr: float = float("nan")
    coefficient: float = float("nan")
    max_vif: float = float("nan")
    p_spiegelhalter: float = float("nan")
    aic_base: float = float("nan")
    aic_candidate: float = float("nan")
    p_auc: float = float("nan")
    auc_direction: Direction = Direction.NONE
    p_mse: float = float("nan")
    mse_direction: Direction = Direction.NONE
    mse_tested: bool = False
    reason: Optional[str] = None


@dataclass(frozen=True)
class TrimAction:
    variable: str
    model_before: tuple[str, ...]
    wrong_sign: bool
    p_lr: float
    p_auc: float
    p_mse: float


@dataclass
class CandidateRecord:
    step: int
    base_variables: tuple[str, ...]
    candidate_variable: str
    verdict: Optional[ImprovementVerdict]
    reason: Optional[str] = None
    trims: list[TrimAction] = field(default_factory=list)
    revalidation: Optional[ImprovementVerdict] = None
    accepted: bool = False
    final_variables: Optional[tuple[str, ...]] = None

    @property
    def trimmed_away(self) -> list[str]:
        return [t.variable for t in self.trims]

    def to_dict(self) -> dict:
        v = self.verdict

        def num(x):
            return None if x is None or not np.isfinite(x) else float(x)

        return {
            "step": self.step,
            "base_variables": list(self.base_variables),
            "candidate_variable": self.candidate_variable,
            "p_lr": num(v.p_lr) if v else None,
            "sign_ok": v.sign_pass if v else None,
            "max_vif": num(v.max_vif) if v else None,
            "p_spiegelhalter": num(v.p_spiegelhalter) if v else None,
            "aic_base": num(v.aic_base) if v else None,
            "aic_candidate": num(v.aic_candidate) if v else None,
            "p_auc": num(v.p_auc) if v else None,
            "auc_direction": v.auc_direction.value if v else None,
            "p_mse": num(v.p_mse) if v else None,
            "mse_direction": v.mse_direction.value if v else None,
            "verdict": "improved" if (v and v.improved) else "rejected",
            "trimmed_away": self.trimmed_away,
            "accepted": self.accepted,
            "final_variables": list(self.final_variables) if self.final_variables is not None else None,
            "reason": self.reason,
        }


@dataclass
class StepRecord:
    step: int
    candidates: list[CandidateRecord] = field(default_factory=list)
    deleted: list[tuple[str, ...]] = field(default_factory=list)
    improved: list[tuple[str, ...]] = field(default_factory=list)
    leaders: list[tuple[str, ...]] = field(default_factory=list)
    equivalence: list[tuple[tuple[str, ...], tuple[str, ...], bool]] = field(default_factory=list)
    dropped_by_cap: list[tuple[str, ...]] = field(default_factory=list)
    models_after: list[tuple[str, ...]] = field(default_factory=list)
    stopped: bool = False


class ModelSet:
    """Ordered collection of fitted models, unique by variable set.

    Adding a model whose variable set is already present is a no-op; the
    first occurrence wins.
    """

    def __init__(self, models: Iterable[FittedModel] = ()):
        self._models: dict[frozenset, FittedModel] = {}
        for m in models:
            self.add(m)

    def add(self, model: FittedModel) -> bool:
        if model.key in self._models:
            return False
        self._models[model.key] = model
        return True

    def __contains__(self, model: object) -> bool:
        key = model.key if isinstance(model, FittedModel) else frozenset(model)  # type: ignore[arg-type]
        return key in self._models

    def __iter__(self) -> Iterator[FittedModel]:
        return iter(list(self._models.values()))

    def __len__(self) -> int:
        return len(self._models)

    def __getitem__(self, i: int) -> FittedModel:
        return list(self._models.values())[i]

    def variable_sets(self) -> list[tuple[str, ...]]:
        return [m.variable_names for m in self._models.values()]

    def __repr__(self) -> str:
        return f"ModelSet({[m.describe() for m in self]})"


@dataclass
class SelectionResult:
    final_models: ModelSet
    leaders: tuple[FittedModel, ...]
    trace: list[StepRecord]
    terminated_by: TerminatedBy
    aucs: dict[frozenset, float] = field(default_factory=dict)
    mses: dict[frozenset, float] = field(default_factory=dict)

    def candidate_records(self) -> list[CandidateRecord]:
        return [c for s in self.trace for c in s.candidates]


def _order_key(model: FittedModel) -> tuple:
    return (len(model.variable_names), tuple(sorted(model.variable_names)))


# ---------------------------------------------------------------------------
# Selector
# ---------------------------------------------------------------------------


class Selector:
    """Runs the selection algorithm on one dataset.

    Fits and per-model statistics are memoised by variable set, so a model
    reached along different paths is estimated once.
    """

    def __init__(self, data: Dataset, signs: SignExpectation | None, config: SelectionConfig):
        self.data = data
        self.signs = signs if signs is not None else SignExpectation()
        self.config = config
        self._fits: dict[frozenset, FittedModel | Exception] = {}
        self._placements: dict[frozenset, Placements] = {}
        self._mse: dict[frozenset, float] = {}
        self._calib: dict[frozenset, TestResult] = {}
        self._vif: dict[frozenset, float] = {}

    # -- cached primitives -------------------------------------------------

    def fit(self, variables: Sequence[str]) -> FittedModel:
        variables = tuple(variables)
        key = frozenset(variables)
        hit = self._fits.get(key)
        if hit is None:
            try:
                hit = glm.fit_logistic(self.data, variables, self.config)
            except SingularMatrixError as exc:
                hit = exc
            self._fits[key] = hit
        if isinstance(hit, Exception):
            raise hit
        return hit.reordered(variables)

    def placements(self, model: FittedModel) -> Placements:
        p = self._placements.get(model.key)
        if p is None:
            p = placements(model.fitted_probs, self.data.response)
            self._placements[model.key] = p
        return p

    def auc(self, model: FittedModel) -> float:
        return self.placements(model).auc

    def mse(self, model: FittedModel) -> float:
        v = self._mse.get(model.key)
        if v is None:
            v = brier(model.fitted_probs, self.data.response)
            self._mse[model.key] = v
        return v

    def calibration(self, model: FittedModel) -> TestResult:
        t = self._calib.get(model.key)
        if t is None:
            t = spiegelhalter_test(model.fitted_probs, self.data.response)
            self._calib[model.key] = t
        return t

    def max_vif(self, model: FittedModel) -> float:
        v = self._vif.get(model.key)
        if v is None:
            vifs = glm.vif(self.data, model.variable_names)
            v = max(vifs.values()) if vifs else 1.0
            self._vif[model.key] = v
        return v

    def auc_test(self, a: FittedModel, b: FittedModel) -> TestResult:
        return delong_from_placements(self.placements(a), self.placements(b))

    def mse_test(self, a: FittedModel, b: FittedModel) -> TestResult:
        return redelmeier_test(a.fitted_probs, b.fitted_probs, self.data.response)

    def is_calibrated(self, model: FittedModel) -> bool:
        return self.calibration(model).p_value > self.config.p_calib

    # -- criteria ----------------------------------------------------------

    def check_improved(self, base: FittedModel, candidate: FittedModel,
                       new_variable: str | None = None,
                       lr_reference: FittedModel | None = None) -> ImprovementVerdict:
        """Evaluate every improvement criterion of ``candidate`` against ``base``.

        Normally ``candidate`` is ``base`` plus one variable.  For a trimmed
        candidate, pass the added variable explicitly together with
        ``lr_reference``, the candidate without that variable, which then
        serves as the null model of the likelihood-ratio test.
        """
        cfg = self.config
        if new_variable is None:
            extra = set(candidate.variable_names) - set(base.variable_names)
            if len(extra) != 1 or len(candidate.variable_names) != len(base.variable_names) + 1:
                raise ValueError("candidate must extend base by exactly one variable")
            new_variable = extra.pop()
        if not candidate.converged:
            return ImprovementVerdict(False, new_variable, reason="candidate fit did not converge")
        reference = lr_reference if lr_reference is not None else base

        p_lr = glm.lr_test(reference, candidate).p_value
        lr_pass = p_lr < cfg.p_lr_I
        coef = candidate.coefficient(new_variable)
        sign_pass = self.signs[new_variable].admits(coef)
        max_vif = self.max_vif(candidate)
        vif_pass = max_vif < cfg.v_crit
        p_cal = self.calibration(candidate).p_value
        calib_pass = p_cal > cfg.p_calib
        aic_pass = candidate.aic < base.aic

        t_auc = self.auc_test(candidate, base)
        sig_auc = t_auc.p_value < cfg.p_auc_I
        a_plus = sig_auc and t_auc.direction is Direction.FIRST_BETTER
        a_minus = sig_auc and t_auc.direction is Direction.SECOND_BETTER

        t_mse = self.mse_test(candidate, base)
        mse_tested = calib_pass and self.is_calibrated(base)
        sig_mse = mse_tested and t_mse.p_value < cfg.p_mse_I
        m_plus = sig_mse and t_mse.direction is Direction.FIRST_BETTER
        m_minus = sig_mse and t_mse.direction is Direction.SECOND_BETTER

        if cfg.decision_mode is DecisionMode.AUC_AND_MSE:
            dc_pass = a_plus and m_plus
        else:
            dc_pass = (a_plus and not m_minus) or (m_plus and not a_minus)

        improved = lr_pass and sign_pass and vif_pass and calib_pass and aic_pass and dc_pass
        return ImprovementVerdict(
            improved=improved, new_variable=new_variable,
            lr_pass=lr_pass, sign_pass=sign_pass, vif_pass=vif_pass, calib_pass=calib_pass,
            aic_pass=aic_pass, auc_pass=a_plus, mse_pass=m_plus, dc_pass=dc_pass,
            p_lr=p_lr, coefficient=coef, max_vif=max_vif, p_spiegelhalter=p_cal,
            aic_base=base.aic, aic_candidate=candidate.aic,
            p_auc=t_auc.p_value, auc_direction=t_auc.direction,
            p_mse=t_mse.p_value, mse_direction=t_mse.direction, mse_tested=mse_tested,
        )

    def trim_model(self, candidate: FittedModel, new_variable: str
                   ) -> tuple[FittedModel, list[TrimAction]]:
        """Drop earlier variables that lost their contribution after adding ``new_variable``.

        A variable goes if its coefficient has the wrong sign, or if removing
        it changes neither the likelihood, the AUC nor the Brier score
        significantly.  After every removal the scan restarts on the reduced
        model.  Variables whose removal yields an unusable refit are kept.
        """
        cfg = self.config
        current = candidate
        actions: list[TrimAction] = []
        while True:
            removed = False
            for v in current.variable_names:
                if v == new_variable:
                    continue
                wrong_sign = not self.signs[v].admits(current.coefficient(v))
                try:
                    reduced = self.fit(tuple(x for x in current.variable_names if x != v))
                except SingularMatrixError:
                    continue
                if not reduced.converged:
                    continue
                p_lr = glm.lr_test(reduced, current).p_value
                p_auc = self.auc_test(current, reduced).p_value
                p_mse = self.mse_test(current, reduced).p_value
                no_contribution = p_lr > cfg.p_lr_T and p_auc > cfg.p_auc_T and p_mse > cfg.p_mse_T
                if wrong_sign or no_contribution:
                    actions.append(TrimAction(v, current.variable_names, wrong_sign, p_lr, p_auc, p_mse))
                    current = reduced
                    removed = True
                    break
            if not removed:
                return current, actions

    def leading_models(self, models: Iterable[FittedModel]) -> tuple[FittedModel, ...]:
        """One or two leaders: the best-AUC model and/or the best-Brier model."""
        models = list(models)
        if not models:
            raise ValueError("leading_models needs a non-empty model set")
        cfg = self.config
        m1 = min(models, key=lambda m: (-self.auc(m), *_order_key(m)))
        m2 = min(models, key=lambda m: (self.mse(m), *_order_key(m)))
        if m1.key == m2.key:
            return (m1,)
        p_auc = self.auc_test(m1, m2).p_value
        p_mse = self.mse_test(m1, m2).p_value
        if p_auc < cfg.p_auc_E and p_mse > cfg.p_mse_E:
            return (m1,)
        if p_auc > cfg.p_auc_E and p_mse < cfg.p_mse_E:
            return (m2,)
        return (m1, m2)

    def check_equivalent(self, model: FittedModel, leader: FittedModel) -> bool:
        """True if the two models cannot be ranked on discrimination and calibration."""
        if model.key == leader.key:
            return True
        t_auc = self.auc_test(model, leader)
        t_mse = self.mse_test(model, leader)
        s_auc = t_auc.p_value < self.config.p_auc_E
        s_mse = t_mse.p_value < self.config.p_mse_E
        if not s_auc and not s_mse:
            return True
        if s_auc and s_mse:
            return {t_auc.direction, t_mse.direction} == {Direction.FIRST_BETTER,
                                                         Direction.SECOND_BETTER}
        return False

    # -- steps -------------------------------------------------------------

    def _evaluate(self, base: FittedModel, variable: str, step: int
                  ) -> tuple[CandidateRecord, Optional[FittedModel]]:
        record = CandidateRecord(step, base.variable_names, variable, None)
        try:
            cand = self.fit(base.variable_names + (variable,))
        except SingularMatrixError as exc:
            record.reason = str(exc)
            return record, None
        verdict = self.check_improved(base, cand)
        record.verdict = verdict
        record.reason = verdict.reason
        if not verdict.improved:
            return record, None
        trimmed, actions = self.trim_model(cand, variable)
        record.trims = actions
        if actions:
            reference = self.fit(tuple(x for x in trimmed.variable_names if x != variable))
            revalidation = self.check_improved(base, trimmed, variable, reference)
            record.revalidation = revalidation
            if not revalidation.improved:
                record.reason = "trimmed model no longer improves on its base"
                return record, None
        record.accepted = True
        record.final_variables = trimmed.variable_names
        return record, trimmed

    def selection_step(self, current: ModelSet, step: int = 1
                       ) -> tuple[ModelSet, StepRecord, bool]:
        rec = StepRecord(step)
        deleted: set[frozenset] = set()
        improved = ModelSet()
        for base in current:
            for v in self.data.names:
                if v in base.variable_names:
                    continue
                cand_rec, model = self._evaluate(base, v, step)
                rec.candidates.append(cand_rec)
                if model is None:
                    continue
                if base.key not in deleted:
                    deleted.add(base.key)
                    rec.deleted.append(base.variable_names)
                if improved.add(model):
                    rec.improved.append(model.variable_names)

        if not len(improved):
            rec.stopped = True
            rec.leaders = [m.variable_names for m in self.leading_models(current)]
            rec.models_after = current.variable_sets()
            return current, rec, True

        pool = ModelSet(m for m in current if m.key not in deleted)
        for m in improved:
            pool.add(m)
        leaders = self.leading_models(pool)
        leader_keys = {m.key for m in leaders}
        kept = []
        for m in pool:
            if m.key in leader_keys:
                kept.append(m)
                continue
            ok = True
            for ld in leaders:
                eq = self.check_equivalent(m, ld)
                rec.equivalence.append((m.variable_names, ld.variable_names, eq))
                ok = ok and eq
            if ok:
                kept.append(m)

        cap = self.config.max_models_per_step
        if len(kept) > cap:
            others = sorted((m for m in kept if m.key not in leader_keys),
                            key=lambda m: (-self.auc(m), *_order_key(m)))
            survivors = leader_keys | {m.key for m in others[: cap - len(leaders)]}
            rec.dropped_by_cap = [m.variable_names for m in kept if m.key not in survivors]
            log.info("step %d: %d models over cap, dropped %d", step, len(kept),
                     len(rec.dropped_by_cap))
            kept = [m for m in kept if m.key in survivors]

        nxt = ModelSet(kept)
        rec.leaders = [m.variable_names for m in leaders]
        rec.models_after = nxt.variable_sets()
        return nxt, rec, False

    def run(self) -> SelectionResult:
        current = ModelSet([self.fit(())])
        trace: list[StepRecord] = []
        terminated = TerminatedBy.MAX_STEPS
        for step in range(1, self.config.max_steps + 1):
            current, rec, stopped = self.selection_step(current, step)
            trace.append(rec)
            if stopped:
                terminated = TerminatedBy.NO_IMPROVEMENT
                break
        return SelectionResult(
            current, self.leading_models(current), trace, terminated,
            aucs={m.key: self.auc(m) for m in current},
            mses={m.key: self.mse(m) for m in current},
        )


# ---------------------------------------------------------------------------
# Functional API
# ---------------------------------------------------------------------------


def check_improved(base: FittedModel, candidate: FittedModel, data: Dataset,
                   signs: SignExpectation | None, config: SelectionConfig) -> ImprovementVerdict:
    return Selector(data, signs, config).check_improved(base, candidate)


def trim_model(candidate: FittedModel, base_variables: Sequence[str], data: Dataset,
               signs: SignExpectation | None, config: SelectionConfig) -> FittedModel:
    extra = [v for v in candidate.variable_names if v not in set(base_variables)]
    if len(extra) != 1:
        raise ValueError("candidate must extend base_variables by exactly one variable")
    return Selector(data, signs, config).trim_model(candidate, extra[0])[0]


def leading_models(models: Iterable[FittedModel], data: Dataset,
                   config: SelectionConfig) -> tuple[FittedModel, ...]:
    return Selector(data, None, config).leading_models(models)


def check_equivalent(model: FittedModel, leader: FittedModel, data: Dataset,
                     config: SelectionConfig) -> bool:
    return Selector(data, None, config).check_equivalent(model, leader)


def selection_step(current: ModelSet, data: Dataset, signs: SignExpectation | None,
                   config: SelectionConfig, step: int = 1) -> tuple[ModelSet, StepRecord, bool]:
    return Selector(data, signs, config).selection_step(current, step)


def run_csslr(data: Dataset, signs: SignExpectation | None,
              config: SelectionConfig) -> SelectionResult:
    """Run the full stepwise selection from the constant model."""
    return Selector(data, signs, config).run()


def representative_model(result: SelectionResult) -> FittedModel:
    """The leader with the largest AUC (ties: fewer variables, then names)."""
    return min(result.leaders, key=lambda m: (-result.aucs[m.key], *_order_key(m)))
