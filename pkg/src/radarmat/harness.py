"""
End-to-end runs over simulated scenes: sphere calibration, per-object EM
estimation and identification under several reasoning modes, and the report
that compares them.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import pydantic
from rich import box
from rich.console import Console
from rich.table import Table
from rich.text import Text

from . import records
from .dsp_pipeline import DetectionSettings, locate_targets
from .em_estimator import Calibration, calibrate, estimate_em_parameters
from .errors import CalibrationAmbiguityError, InvalidConfigError, NoTargetDetectedError
from .fmcw_sim import NoiseSpec, synthesize_cube
from .knowledge_rag import (
    Embedder,
    HashedBowEmbedder,
    KnowledgeIndex,
    ingest_directory,
    packaged_knowledge_dir,
)
from .material_reasoner import (
    CompletionClient,
    EndpointConfig,
    IdentifyOptions,
    MaterialVerdict,
    RuleTable,
    VerdictMode,
    identify,
)
from .radar_core import EMParameters, RadarConfig, RadarCube, TargetDetection, wavelength
from .scenarios import Suite


logger = logging.getLogger(__name__)

MODE_OPTIONS: dict[str, tuple[bool, bool]] = {
    # mode: (with_rag, use_llm)
    "llm+rag": (True, True),
    "llm-only": (False, True),
    "rule-based": (False, False),
}


def calibrate_from_cube(
    cube: RadarCube,
    sphere_diameter: float,
    settings: DetectionSettings | None = None,
) -> tuple[Calibration, TargetDetection]:
    detections, _, _ = locate_targets(cube, settings)
    if len(detections) != 1:
        raise CalibrationAmbiguityError(
            f"calibration needs exactly one target in the capture, found {len(detections)}"
        )
    detection = detections[0]
    cal = calibrate(
        detection.snr_linear,
        detection.range_R,
        sphere_diameter,
        wavelength_m=wavelength(cube.config),
    )
    return cal, detection


def strongest_detection(
    cube: RadarCube, settings: DetectionSettings | None = None
) -> TargetDetection:
    detections, _, _ = locate_targets(cube, settings)
    if not detections:
        raise NoTargetDetectedError("no target detected")
    return detections[0]


class ReportRow(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    label: str
    expected: str
    params: EMParameters
    verdicts: dict[str, MaterialVerdict]

    def is_correct(self, mode: str) -> bool:
        return self.verdicts[mode].canonical_class == self.expected


class ModeSummary(pydantic.BaseModel):
    mode: str
    correct: int
    total: int

    @pydantic.computed_field
    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


class RunReport(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    modes: tuple[str, ...]
    calibration: Calibration
    rows: list[ReportRow]

    def summary(self) -> list[ModeSummary]:
        return [
            ModeSummary(
                mode=mode,
                correct=sum(row.is_correct(mode) for row in self.rows),
                total=len(self.rows),
            )
            for mode in self.modes
        ]

    def to_records(self) -> list[dict[str, Any]]:
        blocks = []
        for row in self.rows:
            block: dict[str, Any] = {"object": row.label, "expected": row.expected}
            block.update(row.params.to_record())
            for mode in self.modes:
                verdict = row.verdicts[mode]
                block[f"verdict.{mode}"] = verdict.canonical_class
                block[f"label.{mode}"] = verdict.label
            blocks.append(block)
        for s in self.summary():
            blocks.append(
                {"mode": s.mode, "correct": s.correct, "total": s.total, "accuracy": s.accuracy}
            )
        return blocks


def _fmt(value: float, spec: str) -> str:
    if math.isinf(value):
        return "inf"
    text = format(value, spec)
    # values that round to zero print unsigned
    if text.startswith("-") and float(text) == 0.0:
        return text[1:]
    return text


def results_table(report: RunReport) -> Table:
    table = Table(title="Material identification", box=box.SIMPLE_HEAD)
    for name in ("Object", "Truth", "R (m)", "V (m/s)", "θ (°)", "SNR (dB)", "σ (m²)", "ρ", "Γf", "εr"):
        table.add_column(name, justify="left" if name in ("Object", "Truth") else "right")
    for mode in report.modes:
        table.add_column(mode)

    for row in report.rows:
        p, d = row.params, row.params.detection
        cells = [
            Text(row.label),
            row.expected,
            _fmt(d.range_R, ".3f"),
            _fmt(d.velocity_V, ".2f"),
            _fmt(math.degrees(d.angle_theta), ".1f"),
            _fmt(d.snr_db, ".1f"),
            f"{p.rcs_sigma:.3e}",
            f"{p.rho:.3f}",
            f"{p.gamma_f:.3f}",
            _fmt(p.epsilon_r, ".2f"),
        ]
        for mode in report.modes:
            verdict = row.verdicts[mode]
            style = "green" if row.is_correct(mode) else "red"
            cells.append(Text(verdict.label or verdict.canonical_class, style=style))
        table.add_row(*cells)
    return table


def ablation_table(report: RunReport) -> Table:
    table = Table(title="Ablation", box=box.SIMPLE_HEAD)
    table.add_column("Mode")
    table.add_column("Correct", justify="right")
    table.add_column("Accuracy", justify="right")
    for s in report.summary():
        table.add_row(s.mode, f"{s.correct}/{s.total}", f"{100 * s.accuracy:.1f}%")
    return table


def write_report(report: RunReport, path: Path | str, records_path: Path | str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        console = Console(file=f, width=180, no_color=True, emoji=False)
        console.print(results_table(report))
        console.print(ablation_table(report))
    if records_path is not None:
        Path(records_path).write_text(records.format_records(report.to_records()), encoding="utf-8")


def run_suite(
    suite: Suite,
    config: RadarConfig | None = None,
    modes: Sequence[VerdictMode] = ("rule-based",),
    *,
    seed: int = 0,
    workers: int = 1,
    k: int = 4,
    index: KnowledgeIndex | None = None,
    embedder: Embedder | None = None,
    endpoint: EndpointConfig | None = None,
    client: CompletionClient | None = None,
    rules: RuleTable | None = None,
    settings: DetectionSettings | None = None,
) -> RunReport:
    """
    Calibrate on the suite's sphere, then simulate, measure and identify every
    object. Object `i` is simulated with noise seed `seed + 1 + i`, so results
    do not depend on `workers`.
    """
    config = config or RadarConfig()
    unknown = [m for m in modes if m not in MODE_OPTIONS]
    if unknown or not modes:
        raise InvalidConfigError(f"unknown or missing modes: {unknown or modes}")
    if workers < 1:
        raise InvalidConfigError(f"workers must be at least 1, got {workers}")

    embedder = embedder or HashedBowEmbedder()
    if "llm+rag" in modes and index is None:
        index = KnowledgeIndex.for_embedder(embedder)
        ingest_directory(index, packaged_knowledge_dir(), embedder)

    sphere = suite.calibration
    sphere_cube = synthesize_cube(
        config, [sphere.to_sim_target()], NoiseSpec.thermal(config, seed)
    )
    cal, _ = calibrate_from_cube(sphere_cube, sphere.sphere_diameter, settings)

    def evaluate(item) -> ReportRow:
        i, obj = item
        target = obj.to_sim_target(config, cal.rho_ref)
        cube = synthesize_cube(config, [target], NoiseSpec.thermal(config, seed + 1 + i))
        params = estimate_em_parameters(strongest_detection(cube, settings), cal, config)
        verdicts = {}
        for mode in modes:
            with_rag, use_llm = MODE_OPTIONS[mode]
            options = IdentifyOptions(with_rag=with_rag, use_llm=use_llm, k=k)
            verdicts[mode] = identify(
                params,
                index,
                endpoint,
                options,
                embedder=embedder,
                client=client,
                rules=rules,
            )
        logger.info(
            "%s: epsilon_r=%s -> %s",
            obj.label,
            _fmt(params.epsilon_r, ".2f"),
            ", ".join(f"{m}={v.canonical_class}" for m, v in verdicts.items()),
        )
        return ReportRow(label=obj.label, expected=obj.material, params=params, verdicts=verdicts)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(evaluate, enumerate(suite.objects)))

    return RunReport(modes=tuple(modes), calibration=cal, rows=rows)
