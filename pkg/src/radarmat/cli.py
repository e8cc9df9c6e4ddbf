"""
The `radarmat` command line.

    radarmat simulate  --scenario SCENE --out CAPTURE
    radarmat calibrate --capture CAPTURE --out CAL [--reference CAPTURE]
    radarmat process   --capture CAPTURE --calibration CAL [--all-targets]
    radarmat index     --out INDEX [--docs DIR] [--embed-model MODEL]
    radarmat identify  --params RECORD [--index INDEX] [--no-rag] [--no-llm]
    radarmat report    --out REPORT [--modes ...] [--workers N]

Every command also accepts --config, --seed and --verbose.
"""

import logging
import math
import sys
from pathlib import Path
from typing import Annotated, Callable, Literal, Sequence

import pydantic
from pydantic import Field
from rich.console import Console
from rich.table import Table

from . import printers, records
from .capture import read_capture, write_capture, write_matrix
from .config_base import ConfigBase
from .dsp_pipeline import locate_targets
from .em_estimator import Calibration, calibrate_reference, estimate_em_parameters
from .errors import InvalidConfigError, NoTargetDetectedError, RadarMatError
from .fmcw_sim import NoiseSpec, synthesize_cube
from .harness import calibrate_from_cube, run_suite, write_report
from .knowledge_rag import (
    ChunkSettings,
    Embedder,
    HashedBowEmbedder,
    HttpEmbedder,
    KnowledgeIndex,
    ingest_directory,
    packaged_knowledge_dir,
)
from .log import configure_logging, stderr_console
from .material_reasoner import (
    EndpointConfig,
    IdentifyOptions,
    RuleTable,
    identify,
)
from .radar_core import EMParameters, RadarConfig
from .scenarios import Scenario, Suite, default_suite


logger = logging.getLogger(__name__)

PROG = "radarmat"

stdout_console = Console()


class CommonArgs(ConfigBase):
    config: Annotated[
        Path | None, Field(description="Radar configuration (key = value record or YAML)")
    ] = None
    seed: Annotated[int, Field(ge=0, description="Noise seed")] = 0
    verbose: Annotated[bool, Field(description="Debug logging")] = False

    def radar_config(self) -> RadarConfig:
        return RadarConfig.load(self.config) if self.config else RadarConfig()


class SimulateArgs(CommonArgs):
    """Synthesize a raw capture from a scenario file."""

    scenario: Annotated[Path, Field(description="Targets (YAML or key = value blocks)")]
    out: Annotated[Path, Field(description="Capture file to write")]
    noise: Annotated[bool, Field(description="Add thermal receiver noise")] = True


class CalibrateArgs(CommonArgs):
    """Derive the system constant K from a capture of a metal sphere."""

    capture: Annotated[Path, Field(description="Capture of the calibration sphere")]
    out: Annotated[Path, Field(description="Calibration file to write")]
    sphere_diameter: Annotated[float, Field(gt=0, description="Sphere diameter, m")] = 0.063
    reference: Annotated[
        Path | None, Field(description="Capture of a perfect reflector, sets rho_ref")
    ] = None


class ProcessArgs(CommonArgs):
    """Extract the EM parameters of the detected target(s) in a capture."""

    capture: Annotated[Path, Field(description="Capture to process")]
    calibration: Annotated[Path, Field(description="Calibration file")]
    out: Annotated[Path | None, Field(description="Parameter record file (default: stdout)")] = None
    all_targets: Annotated[bool, Field(description="One record per detection")] = False
    export_maps: Annotated[
        Path | None, Field(description="Directory for the RD/RA matrix files")
    ] = None


class EmbedArgs(CommonArgs):
    endpoint: Annotated[Path | None, Field(description="Endpoint YAML")] = None
    base_url: Annotated[str | None, Field(description="Endpoint base URL override")] = None
    embed_model: Annotated[
        str | None,
        Field(description="Embedding model served at the endpoint (default: hashed bag of words)"),
    ] = None
    embed_dim: Annotated[int, Field(ge=1, description="Dimension of --embed-model vectors")] = 768

    def embedder(self) -> Embedder:
        if not self.embed_model:
            return HashedBowEmbedder()
        endpoint = _endpoint_config(self.endpoint, self.base_url)
        return HttpEmbedder(
            endpoint.base_url,
            self.embed_model,
            self.embed_dim,
            api_key=endpoint.api_key.get_secret_value() if endpoint.api_key else None,
            timeout_s=endpoint.timeout_s,
        )


class IndexArgs(EmbedArgs):
    """Chunk, embed and index a directory of knowledge documents."""

    out: Annotated[Path, Field(description="Index file to write")]
    docs: Annotated[
        Path | None, Field(description="Directory of .md/.txt files (default: packaged)")
    ] = None
    chunk: ChunkSettings = ChunkSettings()


class IdentifyArgs(EmbedArgs):
    """Infer the material of the target(s) in a parameter record file."""

    params: Annotated[Path, Field(description="EM parameter record file")]
    index: Annotated[Path | None, Field(description="Knowledge index file")] = None
    rag: Annotated[bool, Field(description="Retrieve knowledge for the prompt")] = True
    llm: Annotated[bool, Field(description="Ask the LLM; --no-llm uses the rule table")] = True
    k: Annotated[int, Field(ge=1, description="Chunks to retrieve")] = 4
    fallback_to_rules: Annotated[
        bool, Field(description="Use the rule table if the endpoint fails")
    ] = False
    rules: Annotated[Path | None, Field(description="Rule table YAML")] = None
    out: Annotated[Path | None, Field(description="Verdict record file (default: stdout)")] = None


class ReportArgs(EmbedArgs):
    """Run the simulated object suite and write the comparison report."""

    out: Annotated[Path, Field(description="Text report to write")]
    records: Annotated[
        Path | None, Field(description="Record file (default: OUT with .records suffix)")
    ] = None
    suite: Annotated[Path | None, Field(description="Suite YAML (default: packaged)")] = None
    modes: Annotated[
        list[Literal["llm+rag", "llm-only", "rule-based"]],
        Field(min_length=1, description="Reasoning modes to compare"),
    ] = ["rule-based"]
    workers: Annotated[int, Field(ge=1, description="Objects evaluated in parallel")] = 1
    k: Annotated[int, Field(ge=1, description="Chunks to retrieve")] = 4
    index: Annotated[Path | None, Field(description="Knowledge index file")] = None
    rules: Annotated[Path | None, Field(description="Rule table YAML")] = None


def _endpoint_config(path: Path | None, base_url: str | None) -> EndpointConfig:
    config = EndpointConfig.load_from_yaml(path) if path else EndpointConfig()
    config = config.with_env_overrides()
    if base_url:
        config = config.model_copy(update={"base_url": base_url})
    return config


def _rule_table(path: Path | None) -> RuleTable | None:
    return RuleTable.load_from_yaml(path) if path else None


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise InvalidConfigError(f"{what} {path} not found")
    return path


def _read_capture(args: CommonArgs, path: Path):
    cube = read_capture(_require_file(path, "capture"))
    if args.config and args.radar_config() != cube.config:
        logger.warning("--config differs from the configuration recorded in %s; using the capture's", path)
    return cube


def cmd_simulate(args: SimulateArgs) -> int:
    config = args.radar_config()
    scenario = Scenario.load(_require_file(args.scenario, "scenario"))
    noise = NoiseSpec.thermal(config, args.seed) if args.noise else None
    cube = synthesize_cube(config, scenario.targets, noise)
    write_capture(args.out, cube.quantized())

    table = Table(title=f"Targets written to {args.out}")
    for name in ("Label", "R (m)", "V (m/s)", "θ (°)", "RCS (m²)"):
        table.add_column(name, justify="left" if name == "Label" else "right")
    for t in scenario.targets:
        table.add_row(
            t.label, f"{t.range:.4f}", f"{t.velocity:.3f}", f"{math.degrees(t.angle):.2f}", f"{t.rcs:.4e}"
        )
    stdout_console.print(table)
    return 0


def cmd_calibrate(args: CalibrateArgs) -> int:
    cube = _read_capture(args, args.capture)
    cal, detection = calibrate_from_cube(cube, args.sphere_diameter)
    if args.reference:
        reference = _read_capture(args, args.reference)
        detections, _, _ = locate_targets(reference)
        if not detections:
            raise NoTargetDetectedError(f"no target detected in {args.reference}")
        cal = calibrate_reference(cal, detections[0], reference.config)
    cal.save_as_record(args.out)
    stdout_console.print(
        f"K = {cal.K:.6g}  (sphere at {detection.range_R:.4f} m, "
        f"SNR {detection.snr_db:.2f} dB)  rho_ref = {cal.rho_ref:.6g}"
    )
    return 0


def cmd_process(args: ProcessArgs) -> int:
    cube = _read_capture(args, args.capture)
    cal = Calibration.load(_require_file(args.calibration, "calibration"))
    detections, rd, ra = locate_targets(cube)

    if args.export_maps:
        args.export_maps.mkdir(parents=True, exist_ok=True)
        write_matrix(args.export_maps / "rd_map.bin", rd.power)
        if ra is not None:
            write_matrix(args.export_maps / "ra_map.bin", ra.power)

    if not detections:
        raise NoTargetDetectedError("no target detected")
    if not args.all_targets:
        detections = detections[:1]

    params = [estimate_em_parameters(d, cal, cube.config) for d in detections]
    for p in params:
        for warning in p.warnings:
            logger.warning("%s", warning)
    text = records.format_records(p.to_record() for p in params)
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_index(args: IndexArgs) -> int:
    embedder = args.embedder()
    index = KnowledgeIndex.for_embedder(embedder)
    docs = args.docs or packaged_knowledge_dir()
    counts = ingest_directory(index, docs, embedder, args.chunk)
    if not counts:
        raise InvalidConfigError(f"no .md or .txt documents in {docs}")
    index.save(args.out)

    table = Table(title=f"{len(index)} chunk(s) indexed into {args.out}")
    table.add_column("Document")
    table.add_column("Chunks", justify="right")
    for doc_id, count in counts.items():
        table.add_row(doc_id, str(count))
    stdout_console.print(table)
    return 0


def cmd_identify(args: IdentifyArgs) -> int:
    blocks = records.parse_records(_require_file(args.params, "parameter file").read_text(encoding="utf-8"))
    if not blocks:
        raise InvalidConfigError(f"{args.params} holds no parameter record")
    params = [EMParameters.from_record(block) for block in blocks]

    options = IdentifyOptions(
        with_rag=args.rag, use_llm=args.llm, k=args.k, fallback_to_rules=args.fallback_to_rules
    )
    index = None
    if options.use_llm and options.with_rag:
        if args.index is None:
            raise InvalidConfigError("--index is required unless --no-rag or --no-llm is given")
        index = KnowledgeIndex.load(_require_file(args.index, "index file"))

    endpoint = _endpoint_config(args.endpoint, args.base_url) if options.use_llm else None
    rules = _rule_table(args.rules)
    embedder = args.embedder()
    verdicts = [identify(p, index, endpoint, options, embedder=embedder, rules=rules) for p in params]

    text = records.format_records(v.to_record() for v in verdicts)
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_report(args: ReportArgs) -> int:
    config = args.radar_config()
    suite = Suite.load(args.suite) if args.suite else default_suite()
    use_llm = any(mode != "rule-based" for mode in args.modes)
    index = KnowledgeIndex.load(_require_file(args.index, "index file")) if args.index else None

    report = run_suite(
        suite,
        config,
        args.modes,
        seed=args.seed,
        workers=args.workers,
        k=args.k,
        index=index,
        endpoint=_endpoint_config(args.endpoint, args.base_url) if use_llm else None,
        rules=_rule_table(args.rules),
        embedder=args.embedder(),
    )
    records_path = args.records or args.out.with_suffix(".records")
    write_report(report, args.out, records_path)

    for s in report.summary():
        stdout_console.print(f"{s.mode}: {s.correct}/{s.total} correct")
    return 0


COMMANDS: dict[str, tuple[type[CommonArgs], Callable]] = {
    "simulate": (SimulateArgs, cmd_simulate),
    "calibrate": (CalibrateArgs, cmd_calibrate),
    "process": (ProcessArgs, cmd_process),
    "index": (IndexArgs, cmd_index),
    "identify": (IdentifyArgs, cmd_identify),
    "report": (ReportArgs, cmd_report),
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        printers.print_commands(PROG, {name: cls for name, (cls, _) in COMMANDS.items()})
        return 0
    if argv[0] not in COMMANDS:
        stderr_console.print(f"{PROG}: unknown command '{argv[0]}'", markup=False, highlight=False)
        return 2

    name, rest = argv[0], argv[1:]
    args_cls, handler = COMMANDS[name]
    try:
        args = args_cls.parse_args(prog=f"{PROG} {name}", args=rest, console=stderr_console)
    except SystemExit as e:
        if e.code is None or isinstance(e.code, int):
            return e.code or 0
        return 2

    configure_logging(args.verbose)
    if args.verbose:
        args_cls.print_diff_to_default(args.model_dump(), "tree_skip", stderr_console)
    try:
        return handler(args)
    except pydantic.ValidationError as e:
        printers.print_validation_errors(MODELS_BY_NAME.get(e.title, args_cls), e, stderr_console)
        return 1
    except RadarMatError as e:
        stderr_console.print(f"{PROG} {name}: error: {e}", markup=False, highlight=False)
        return 2
    except OSError as e:
        stderr_console.print(f"{PROG} {name}: error: {e}", markup=False, highlight=False)
        return 2


MODELS_BY_NAME: dict[str, type[pydantic.BaseModel]] = {
    cls.__name__: cls
    for cls in (RadarConfig, Calibration, Scenario, Suite, EndpointConfig, RuleTable, EMParameters)
}


if __name__ == "__main__":
    sys.exit(main())
