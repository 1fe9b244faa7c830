"""Command-line entry point: ``whispervc <command> ...``.

Exit status is 0 on success, 1 for user errors (bad flags, missing files,
invalid manifests or configs) and 2 for anything unexpected.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .alignment import ALGN_VERSION, AlignmentError, dtw, trim_silence
from .audio_io import AudioError, write_wav
from .corpus import (
    ManifestError,
    SelectionError,
    SplitError,
    load_manifest,
    manifest_from_tree,
    select_training_set,
    split,
    trained_on,
)
from .dsp_recipe import DimensionError, DspParams
from .pipeline import (
    GmmSettings,
    ModelError,
    convert_waveform,
    evaluate,
    load_model,
    load_waveform,
    train_model,
)
from .spectral import MCEP_VERSION, AnalysisConfig, ConfigError, analyze, load_cepstrogram, save_cepstrogram
from .vc_dnn import DNN_VERSION, DnnHyperparams, save_dnn
from .vc_gmm import GMM_VERSION, GmmError, save_gmm
from .vocoder import SynthesisConfig, copy_synthesis, synthesize

log = logging.getLogger("whispervc")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2
MODES = {"sd": "SD", "all": "All", "excl": "Excl", "male": "Male", "female": "Female"}


class UsageError(Exception):
    pass


USER_ERRORS = (
    UsageError,
    AudioError,
    ConfigError,
    ManifestError,
    SplitError,
    SelectionError,
    AlignmentError,
    DimensionError,
    ModelError,
    GmmError,
    OSError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunConfig:
    """Resolved settings: config-file sections overridden by explicit flags."""

    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    dnn: DnnHyperparams = field(default_factory=DnnHyperparams)
    gmm: GmmSettings = field(default_factory=GmmSettings)
    dsp: DspParams = field(default_factory=DspParams)
    rounds: int = 3
    seed: int = 0
    jobs: int = 1


def _read_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _section(doc: dict, name: str, cls):
    data = doc.get(name, {})
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"config section [{name}] has unknown keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config section [{name}]: {exc}") from exc


def resolve_config(args) -> RunConfig:
    doc = _read_config_file(args.config) if getattr(args, "config", None) else {}
    rc = RunConfig(
        analysis=_section(doc, "analysis", AnalysisConfig),
        synthesis=_section(doc, "synthesis", SynthesisConfig),
        dnn=_section(doc, "dnn", DnnHyperparams),
        gmm=_section(doc, "gmm", GmmSettings),
        dsp=DspParams.from_dict(doc.get("dsp", {})),
        rounds=int(doc.get("align", {}).get("rounds", 3)),
    )
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    rc.seed = seed
    rc.jobs = args.jobs
    rc.synthesis = replace(rc.synthesis, seed=seed)
    rc.dnn = replace(rc.dnn, seed=seed)
    if getattr(args, "epochs", None) is not None:
        rc.dnn = replace(rc.dnn, epochs=args.epochs)
    if getattr(args, "mixtures", None) is not None:
        rc.gmm = replace(rc.gmm, K=args.mixtures)
    if getattr(args, "rounds", None) is not None:
        rc.rounds = args.rounds
    if getattr(args, "f0_ref", None) is not None:
        rc.dsp = replace(rc.dsp, f0_ref=args.f0_ref)
    if getattr(args, "width_hz", None) is not None:
        rc.dsp = replace(rc.dsp, width_hz=args.width_hz)
    if getattr(args, "no_gv", False):
        rc.gmm = replace(rc.gmm, use_gv=False)
    if rc.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return rc


def _versions() -> str:
    return (
        f"whispervc {__version__} (formats: MCEP v{MCEP_VERSION}, ALGN v{ALGN_VERSION}, "
        f"GMMV v{GMM_VERSION}, DNNV v{DNN_VERSION})"
    )


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON or TOML file with [analysis], [synthesis], [dnn], [gmm], [dsp], [align] sections")
    common.add_argument("--seed", type=int, default=None, help="seed for every random draw (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes over utterances")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="whispervc", description="Normal-to-whispered speech conversion toolkit.")
    p.add_argument("--version", action="version", version=_versions())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("analyze", parents=[common], help="wav -> MCEP feature file")
    s.add_argument("input")
    s.add_argument("output")

    s = sub.add_parser("synthesize", parents=[common], help="MCEP feature file -> wav")
    s.add_argument("input")
    s.add_argument("output")

    s = sub.add_parser("oracle", parents=[common], help="copy-synthesis of a recording")
    s.add_argument("input")
    s.add_argument("output")

    s = sub.add_parser("dsp-convert", parents=[common], help="rule-based normal -> whisper conversion")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--f0-ref", type=float)
    s.add_argument("--width-hz", type=float)

    s = sub.add_parser("align", parents=[common], help="DTW path between two recordings as CSV")
    s.add_argument("source")
    s.add_argument("target")
    s.add_argument("output")
    s.add_argument("--no-trim", action="store_true", help="align full sequences without silence trimming")

    s = sub.add_parser("train", parents=[common], help="train a GMM or DNN converter from a manifest")
    s.add_argument("--model", choices=("gmm", "dnn"), required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--mode", choices=tuple(MODES), required=True)
    s.add_argument("--target", help="evaluated speaker (required for sd and excl)")
    s.add_argument("--dataset", help="restrict training data to one corpus")
    s.add_argument("--split-seed", type=int, default=0, help="seed of the 80/10/10 split")
    s.add_argument("--epochs", type=int)
    s.add_argument("--mixtures", type=int, help="GMM mixture count")
    s.add_argument("--rounds", type=int, help="alignment refinement rounds")
    s.add_argument("-o", "--output", required=True)

    s = sub.add_parser("convert", parents=[common], help="convert a wav with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--no-gv", action="store_true", help="skip GMM global variance postprocessing")
    s.add_argument("input")
    s.add_argument("output")

    s = sub.add_parser("evaluate", parents=[common], help="objective scores per utterance and system")
    s.add_argument("--manifest", required=True)
    s.add_argument("--systems", nargs="+", required=True, metavar="NAME[=MODEL]", help="Oracle, DSP, Source or NAME=model-file")
    s.add_argument("--partition", choices=("train", "validation", "test"), default="test")
    s.add_argument("--speaker", help="only utterances of this speaker")
    s.add_argument("--split-seed", type=int, default=0)
    s.add_argument("--no-gv", action="store_true")
    s.add_argument("--csv", required=True)
    s.add_argument("--markdown", required=True)

    s = sub.add_parser("manifest", parents=[common], help="manifest JSON from a speaker/{NORMAL,WHISPER} tree")
    s.add_argument("root")
    s.add_argument("output")
    s.add_argument("--dataset", default="")
    s.add_argument("--locale", default="")

    s = sub.add_parser("demo-corpus", parents=[common], help="write a small synthetic parallel corpus")
    s.add_argument("root")
    s.add_argument("--male", type=int, default=2)
    s.add_argument("--female", type=int, default=2)
    s.add_argument("--utterances", type=int, default=10)
    return p


def cmd_analyze(args, rc):
    save_cepstrogram(analyze(load_waveform(args.input, rc.analysis), rc.analysis), args.output)


def cmd_synthesize(args, rc):
    c = load_cepstrogram(args.input, rc.analysis)
    write_wav(synthesize(c, rc.synthesis), args.output)


def cmd_oracle(args, rc):
    write_wav(copy_synthesis(load_waveform(args.input, rc.analysis), rc.analysis, rc.synthesis), args.output)


def cmd_dsp_convert(args, rc):
    from .dsp_recipe import dsp_convert

    write_wav(dsp_convert(load_waveform(args.input, rc.analysis), rc.analysis, rc.synthesis, rc.dsp), args.output)


def cmd_align(args, rc):
    src = analyze(load_waveform(args.source, rc.analysis), rc.analysis)
    tgt = analyze(load_waveform(args.target, rc.analysis), rc.analysis)
    s0 = t0 = 0
    if not args.no_trim:
        (src, s0), (tgt, t0) = trim_silence(src), trim_silence(tgt)
    path = dtw(src, tgt)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src_idx", "tgt_idx", "local_cost"])
        for (i, j), cost in zip(path.pairs, path.local_costs):
            w.writerow([int(i) + s0, int(j) + t0, f"{cost:.6f}"])


def cmd_train(args, rc):
    mode = MODES[args.mode]
    if mode in ("SD", "Excl") and not args.target:
        raise UsageError(f"--mode {args.mode} requires --target")
    manifest = load_manifest(args.manifest)
    if args.target and args.target not in manifest.speakers():
        raise UsageError(f"speaker {args.target!r} is not in {args.manifest}")
    assignment = split(manifest, seed=args.split_seed)
    utts = select_training_set(manifest, assignment, mode, args.target, args.dataset)
    try:
        val = select_training_set(manifest, assignment, mode, args.target, args.dataset, partition="validation")
    except SelectionError:
        val = []
    descriptor = trained_on(mode, utts, args.target, args.dataset)
    descriptor["split_seed"] = args.split_seed
    model = train_model(
        args.model, utts, rc.analysis, rc.seed, rc.rounds, descriptor, val, rc.dnn, rc.gmm, rc.jobs
    )
    (save_gmm if args.model == "gmm" else save_dnn)(model, args.output)


def cmd_convert(args, rc):
    model = load_model(args.model)
    if model.config != rc.analysis:
        raise ModelError(f"model analysis settings {model.config} differ from the active ones {rc.analysis}")
    w = load_waveform(args.input, rc.analysis)
    write_wav(convert_waveform(model, w, rc.analysis, rc.synthesis, rc.gmm.use_gv), args.output)


def _parse_systems(items) -> dict:
    systems = {}
    for item in items:
        name, _, spec = item.partition("=")
        if not name:
            raise UsageError(f"bad system spec {item!r}")
        systems[name] = spec or name
    return systems


def cmd_evaluate(args, rc):
    manifest = load_manifest(args.manifest)
    assignment = split(manifest, seed=args.split_seed)
    utts = [
        u
        for u in manifest.utterances
        if assignment.partition[u.id] == args.partition and (args.speaker is None or u.speaker == args.speaker)
    ]
    if not utts:
        raise UsageError("no utterances match the evaluation filter")
    report = evaluate(utts, _parse_systems(args.systems), rc.analysis, rc.synthesis, rc.dsp, rc.gmm.use_gv, rc.jobs)
    Path(args.csv).write_text(report.to_csv())
    Path(args.markdown).write_text(report.to_markdown())


def cmd_manifest(args, rc):
    doc = manifest_from_tree(args.root, args.dataset, locale=args.locale)
    if not doc["utterances"]:
        raise UsageError(f"no paired wav files under {args.root}")
    Path(args.output).write_text(json.dumps(doc, indent=2))


def cmd_demo_corpus(args, rc):
    from .synthetic import make_speakers, write_corpus

    write_corpus(args.root, make_speakers(args.male, args.female, rc.seed), args.utterances, "synthetic")


COMMANDS = {
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "oracle": cmd_oracle,
    "dsp-convert": cmd_dsp_convert,
    "align": cmd_align,
    "train": cmd_train,
    "convert": cmd_convert,
    "evaluate": cmd_evaluate,
    "manifest": cmd_manifest,
    "demo-corpus": cmd_demo_corpus,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"whispervc: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, resolve_config(args))
    except USER_ERRORS as exc:
        print(f"whispervc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
