"""Operator command line: validate data, reproduce dataset statistics, build
training examples, run inference through external translators, and score.

Every command is deterministic given its inputs and seed; reruns are
byte-identical. Output artifacts start with a provenance header carrying the
resolved configuration and tool version. Exit codes: 0 ok, 2 data error,
64 usage error, 70 internal error.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .captions import CaptionTrack, TimeSpan, TrackGroupKey, compute_stats
from .chunker import (ChunkRecord, SamplerConfig, build_chunk_records,
                      keyed_rng, sample_clip_draw, sample_manifest_clips)
from .driver import (DriverConfig, EmptyTranslator, OracleTranslator,
                     run_alignment, run_sentence_level, run_timed_translation,
                     run_untimed_discourse)
from .errors import (ClipTooLong, DataError, SignstreamError, UsageError)
from .features import FeatureTrack, read_feature_track, slice_features
from .grammar import TimestampGrammar, render_example, sample_task
from .manifest import ManifestEntry, load_manifest
from .metrics import (combine_frame_accuracy, corpus_bleu, export_segments,
                      frame_accuracy, timed_bleu)
from .subproc import SubprocessTranslator
from .subtitles import detect_format, parse_caption_file, serialize_caption_file

EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _provenance(command: str, args: argparse.Namespace) -> str:
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func",) and v is not None}
    return json.dumps({"tool": "signstream", "version": __version__,
                       "command": command, "config": config},
                      ensure_ascii=False, sort_keys=True)


def _write_jsonl(path: Path, header: str, records: list[dict]) -> None:
    lines = ["# " + header]
    lines += [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_vtt(path: Path, track: CaptionTrack, header: str) -> None:
    body = serialize_caption_file(track, "vtt").decode("utf-8")
    assert body.startswith("WEBVTT\n")
    path.write_text("WEBVTT\n\nNOTE " + header + "\n" + body[len("WEBVTT\n"):],
                    encoding="utf-8")


def _read_track(path: Path) -> CaptionTrack:
    return parse_caption_file(path.read_bytes(), detect_format(path.name))


def _resolve(root: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else root / p


def _load_video(entry: ManifestEntry, root: Path,
                need_features: bool = False,
                ) -> tuple[CaptionTrack, FeatureTrack | None]:
    track = _read_track(_resolve(root, entry.caption_track_ref))
    features = None
    if entry.feature_track_ref is not None:
        features = read_feature_track(
            _resolve(root, entry.feature_track_ref).read_bytes())
    elif need_features:
        raise DataError(f"video {entry.video_id!r} has no feature_track_ref")
    if features is not None:
        # the feature file is the duration authority for the video
        duration = features.duration_s
        if track.captions and track.captions[-1].span.end_s > duration + 1e-9:
            raise DataError(
                f"video {entry.video_id!r}: captions end at "
                f"{track.captions[-1].span.end_s}s but features cover {duration}s")
        track = CaptionTrack(track.captions, duration)
    return track, features


def _map_videos(entries, jobs, fn):
    """Apply fn per entry, in parallel when asked, yielding in manifest order."""
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fn, entries))
    else:
        results = [fn(e) for e in entries]
    return results


# -- validate -----------------------------------------------------------------

def cmd_validate(args) -> int:
    root = Path(args.data_root) if args.data_root else Path(args.manifest).parent
    problems: list[str] = []
    try:
        entries = load_manifest(Path(args.manifest).read_bytes())
    except (OSError, SignstreamError) as e:
        print(f"{args.manifest}: {e}", file=sys.stderr)
        return EXIT_DATA
    for entry in entries:
        cap_path = _resolve(root, entry.caption_track_ref)
        try:
            track = _read_track(cap_path)
        except (OSError, SignstreamError, ValueError) as e:
            problems.append(f"{cap_path}: {e}")
            continue
        if entry.feature_track_ref is None:
            continue
        feat_path = _resolve(root, entry.feature_track_ref)
        try:
            features = read_feature_track(feat_path.read_bytes())
        except (OSError, SignstreamError) as e:
            problems.append(f"{feat_path}: {e}")
            continue
        if track.captions and \
                track.captions[-1].span.end_s > features.duration_s + 1e-9:
            problems.append(
                f"{cap_path}: captions run to {track.captions[-1].span.end_s}s "
                f"but {feat_path} covers only {features.duration_s}s")
    for p in problems:
        print(p, file=sys.stderr)
    print(f"validated {len(entries)} videos: "
          f"{'OK' if not problems else f'{len(problems)} problem(s)'}")
    return EXIT_DATA if problems else EXIT_OK


# -- stats ---------------------------------------------------------------------

def _format_stats_row(name: str, s) -> str:
    lp = ", ".join(str(int(v)) for v in s.length_percentiles_chars)
    dp = ", ".join(f"{v:.1f}" for v in s.duration_percentiles_s)
    return (f"{name:<10} {s.n_signers:>7} {s.n_discourses:>10} "
            f"{s.n_sentences:>9}  {lp:<24} {dp:<28} {s.hours:>6.2f}")


def cmd_stats(args) -> int:
    root = Path(args.data_root) if args.data_root else Path(args.manifest).parent
    entries = load_manifest(Path(args.manifest).read_bytes())

    def load(entry):
        track, _ = _load_video(entry, root)
        return (TrackGroupKey(entry.signer_id, entry.article_id), track)

    pairs = _map_videos(entries, args.jobs, load)
    overall, by_signer = compute_stats(pairs)
    print("# " + _provenance("stats", args))
    print(f"{'group':<10} {'signers':>7} {'discourses':>10} {'sentences':>9}  "
          f"{'len chars (0/10/50/90/100)%':<24} "
          f"{'dur secs (0/10/50/90/100)%':<28} {'hours':>6}")
    print(_format_stats_row("overall", overall))
    if args.by_signer:
        for signer, s in by_signer.items():
            print(_format_stats_row(f"signer#{signer}", s))
    return EXIT_OK


# -- make-examples ---------------------------------------------------------------

def _descriptor_fields(desc) -> dict:
    fields = {"branch": desc.branch}
    if desc.branch == "alignment":
        fields.update(input_specifies_breaks=desc.input_specifies_breaks,
                      duration_conditioning=desc.duration_conditioning,
                      span_overflow=desc.span_overflow)
    else:
        fields.update(timed=desc.timed,
                      duration_conditioning=desc.duration_conditioning,
                      context=desc.context)
    return fields


def cmd_make_examples(args) -> int:
    if (args.count is None) == (args.epochs is None):
        raise UsageError("exactly one of --count / --epochs is required")
    root = Path(args.data_root) if args.data_root else Path(args.manifest).parent
    entries = load_manifest(Path(args.manifest).read_bytes())
    cfg = SamplerConfig(n_s=args.n_s, m_s=args.m_s,
                        p_truncate=args.p_truncate, seed=args.seed)
    grammar = TimestampGrammar(quantum_s=args.quantum_s, max_s=args.n_s)

    records: list[ChunkRecord] = []
    features_by_video: dict[str, FeatureTrack | None] = {}
    for entry in entries:
        track, features = _load_video(entry, root)
        features_by_video[entry.video_id] = features
        pattern = None
        if entry.feature_track_ref is not None:
            pattern = "{video_id}.{chunk_index}.feat"
        records.extend(build_chunk_records(track, cfg, entry.video_id, pattern))

    def render(record, clip, draw_index):
        desc = sample_task(keyed_rng(cfg.seed, "task", draw_index))
        feature_slice = None
        features = features_by_video.get(record.video_id)
        if features is not None:
            span = clip.abs_span(record)
            feature_slice = slice_features(features, span)
        example = render_example(
            record, clip, desc, grammar, feature_slice=feature_slice,
            rng=keyed_rng(cfg.seed, "subset", draw_index),
            context_budget=args.context_budget)
        out = {"video_id": record.video_id, "chunk_index": record.chunk_index,
               "draw_index": draw_index,
               "clip_start_s": clip.start_s, "clip_duration_s": clip.duration_s,
               "input_text": example.input_text, "target_text": example.target_text}
        out.update(_descriptor_fields(desc))
        if record.feature_slice_ref is not None and feature_slice is not None:
            out["feature_ref"] = record.feature_slice_ref
            out["frame_range"] = [feature_slice.start_frame,
                                  feature_slice.start_frame + feature_slice.frame_count]
        return out

    rows: list[dict] = []
    if args.count is not None:
        for i, (record, clip) in enumerate(
                sample_manifest_clips(records, cfg, args.count)):
            rows.append(render(record, clip, i))
    else:
        for epoch in range(args.epochs):
            for record in records:
                clip = sample_clip_draw(record, cfg, epoch)
                rows.append(render(record, clip, epoch))
    _write_jsonl(Path(args.output), _provenance("make-examples", args), rows)
    print(f"wrote {len(rows)} examples to {args.output}")
    return EXIT_OK


# -- translate ---------------------------------------------------------------------

def _make_translator(spec: str, reference: CaptionTrack,
                     features: FeatureTrack, grammar: TimestampGrammar):
    if spec == "oracle":
        return OracleTranslator(reference, grammar)
    if spec == "empty":
        return EmptyTranslator()
    return SubprocessTranslator(shlex.split(spec), features)


def _close_translator(translator) -> None:
    if isinstance(translator, SubprocessTranslator):
        translator.close()


def cmd_translate(args) -> int:
    root = Path(args.data_root) if args.data_root else Path(args.manifest).parent
    entries = load_manifest(Path(args.manifest).read_bytes())
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = DriverConfig(window_s=args.window_s, head_margin_s=args.head_margin_s,
                       tail_margin_s=args.tail_margin_s,
                       fallback_stride_s=args.fallback_stride_s,
                       context_budget=args.context_budget,
                       max_windows=args.max_windows)
    grammar = TimestampGrammar(quantum_s=args.quantum_s, max_s=args.window_s)
    header = _provenance("translate", args)

    def one_video(entry):
        track, features = _load_video(entry, root, need_features=True)
        translator = _make_translator(args.translator, track, features, grammar)
        try:
            if args.mode in ("sentence", "context-sentence"):
                rows = []
                for cap in track:
                    context = None
                    if args.mode == "context-sentence" and cap.index > 0:
                        context = "\n".join(
                            c.text for c in track.captions[:cap.index])
                    try:
                        clip = TimeSpan(cap.span.start_s,
                                        min(cap.span.end_s, features.duration_s))
                        hyp = run_sentence_level(features, clip, context,
                                                 translator, cfg, grammar)
                        rows.append({"video_id": entry.video_id,
                                     "index": cap.index, "hyp": hyp,
                                     "ref": cap.text})
                    except ClipTooLong as e:
                        rows.append({"video_id": entry.video_id,
                                     "index": cap.index, "hyp": "",
                                     "ref": cap.text, "error": str(e)})
                return ("rows", entry.video_id, rows, None)
            if args.mode == "discourse-timed":
                hyp_track, trace = run_timed_translation(
                    features, translator, cfg, grammar)
                return ("track", entry.video_id, hyp_track, trace)
            if args.mode == "discourse-untimed":
                hyp = run_untimed_discourse(features, translator, cfg, grammar)
                return ("rows", entry.video_id,
                        [{"video_id": entry.video_id, "hyp": hyp,
                          "ref": " ".join(track.texts())}], None)
            raise UsageError(f"unknown mode {args.mode!r}")
        finally:
            _close_translator(translator)

    results = _map_videos(entries, args.jobs, one_video)
    rows: list[dict] = []
    trace_rows: list[dict] = []
    for kind, video_id, payload, trace in results:
        if kind == "rows":
            rows.extend(payload)
        else:
            _write_vtt(out_dir / f"{video_id}.vtt", payload, header)
            for w in trace.windows:
                trace_rows.append({
                    "video_id": video_id, "window": w.index,
                    "start_s": w.span.start_s, "end_s": w.span.end_s,
                    "input_text": w.input_text, "raw_output": w.raw_output,
                    "accepted": len(w.accepted),
                    "rejected": [f"{d.code}: {d.detail}" for d in w.rejected],
                    "advance": w.advance_reason})
    if rows:
        _write_jsonl(out_dir / "hypotheses.jsonl", header, rows)
    if trace_rows:
        _write_jsonl(out_dir / "trace.jsonl", header, trace_rows)
    print(f"translated {len(entries)} videos into {out_dir}")
    return EXIT_OK


# -- align ----------------------------------------------------------------------

def cmd_align(args) -> int:
    root = Path(args.data_root) if args.data_root else Path(args.manifest).parent
    entries = load_manifest(Path(args.manifest).read_bytes())
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = _provenance("align", args)
    diagnostics: list[dict] = []

    if args.method == "length-scaling":
        def one_video(entry):
            track, features = _load_video(entry, root)
            duration = (features.duration_s if features is not None
                        else track.video_duration_s)
            from .metrics import length_scaling_align
            return entry.video_id, length_scaling_align(
                track.texts(), TimeSpan(0.0, duration)), None
    elif args.method == "model":
        cfg = DriverConfig(window_s=args.window_s,
                           head_margin_s=args.head_margin_s,
                           tail_margin_s=args.tail_margin_s,
                           fallback_stride_s=args.fallback_stride_s,
                           max_windows=args.max_windows)
        grammar = TimestampGrammar(quantum_s=args.quantum_s, max_s=args.window_s)

        def one_video(entry):
            track, features = _load_video(entry, root, need_features=True)
            translator = _make_translator(args.translator, track, features, grammar)
            try:
                outcome = run_alignment(features, track.texts(), translator,
                                        cfg, grammar)
            finally:
                _close_translator(translator)
            diag = None
            if outcome.decoherence or outcome.unconsumed_texts:
                diag = {"video_id": entry.video_id,
                        "decoherence": outcome.decoherence,
                        "unconsumed": len(outcome.unconsumed_texts)}
            return entry.video_id, outcome.track, diag
    else:
        raise UsageError(f"unknown align method {args.method!r}")

    for video_id, track, diag in _map_videos(entries, args.jobs, one_video):
        _write_vtt(out_dir / f"{video_id}.vtt", track, header)
        if diag:
            diagnostics.append(diag)
    if diagnostics:
        _write_jsonl(out_dir / "diagnostics.jsonl", header, diagnostics)
        for d in diagnostics:
            print(f"{d['video_id']}: decoherence={d['decoherence']!r} "
                  f"unconsumed={d['unconsumed']}", file=sys.stderr)
    print(f"aligned {len(entries)} videos into {out_dir}")
    return EXIT_OK


# -- score -------------------------------------------------------------------------

def _common_duration(hyp_track: CaptionTrack, ref_track: CaptionTrack,
                     ) -> tuple[CaptionTrack, CaptionTrack]:
    # caption files carry no video duration, so score over the longer extent
    duration = max(hyp_track.video_duration_s, ref_track.video_duration_s)
    return (CaptionTrack(hyp_track.captions, duration),
            CaptionTrack(ref_track.captions, duration))


def _track_pairs(hyp: Path, ref: Path) -> list[tuple[str, CaptionTrack, CaptionTrack]]:
    if hyp.is_dir() != ref.is_dir():
        raise UsageError("hyp and ref must both be files or both directories")
    if not hyp.is_dir():
        return [(hyp.stem, *_common_duration(_read_track(hyp), _read_track(ref)))]
    pairs = []
    for ref_file in sorted(ref.glob("*.vtt")) + sorted(ref.glob("*.srt")):
        hyp_file = hyp / ref_file.name
        if not hyp_file.exists():
            raise DataError(f"missing hypothesis file {hyp_file}")
        pairs.append((ref_file.stem,
                      *_common_duration(_read_track(hyp_file), _read_track(ref_file))))
    if not pairs:
        raise DataError(f"no caption files found under {ref}")
    return pairs


def _read_bleu_inputs(hyp: Path, ref: Path | None) -> tuple[list[str], list[str]]:
    if hyp.suffix == ".jsonl":
        hyps, refs = [], []
        for line in hyp.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            row = json.loads(line)
            hyps.append(str(row["hyp"]))
            refs.append(str(row["ref"]))
        return hyps, refs
    if ref is None:
        raise UsageError("plain-text hypotheses need a reference file")
    hyps = hyp.read_text(encoding="utf-8").splitlines()
    refs = ref.read_text(encoding="utf-8").splitlines()
    return hyps, refs


def cmd_score(args) -> int:
    hyp = Path(args.hyp)
    ref = Path(args.ref) if args.ref else None
    print("# " + _provenance("score", args))
    if args.metric == "bleu":
        hyps, refs = _read_bleu_inputs(hyp, ref)
        report = corpus_bleu(hyps, refs)
        print(report.format())
        return EXIT_OK
    if ref is None:
        raise UsageError(f"metric {args.metric} needs hyp and ref caption files")
    pairs = _track_pairs(hyp, ref)
    if args.metric == "timed-bleu":
        from .metrics import reslice_by_reference
        segments: list[str] = []
        ref_texts: list[str] = []
        exported: list[dict] = []
        for name, hyp_track, ref_track in pairs:
            segments.extend(reslice_by_reference(hyp_track, ref_track))
            ref_texts.extend(ref_track.texts())
            if args.export_segments:
                for seg_id, seg, ref_text in export_segments(hyp_track, ref_track):
                    exported.append({"video_id": name, "segment_id": seg_id,
                                     "hyp_text": seg, "ref_text": ref_text})
        report = corpus_bleu(segments, ref_texts,
                             signature_extra="timed:char-midpoint|gap-chars:dropped")
        if args.export_segments:
            _write_jsonl(Path(args.export_segments),
                         _provenance("score", args), exported)
        print(report.format())
        return EXIT_OK
    if args.metric == "frame-acc":
        per_video = [(name, frame_accuracy(h, r, args.eval_fps))
                     for name, h, r in pairs]
        report = combine_frame_accuracy(per_video)
        for name, acc in report.per_video:
            print(f"{name}: frame_accuracy = {acc:.4f}")
        print(f"frame_accuracy = {report.frame_accuracy:.4f} "
              f"({report.matching_frames}/{report.total_frames} frames "
              f"@ {report.eval_fps} fps)")
        return EXIT_OK
    raise UsageError(f"unknown metric {args.metric!r}")


# -- parser -------------------------------------------------------------------------

def _add_driver_flags(p: _Parser) -> None:
    p.add_argument("--window-s", type=float, default=34.0)
    p.add_argument("--head-margin-s", type=float, default=4.0)
    p.add_argument("--tail-margin-s", type=float, default=10.0)
    p.add_argument("--fallback-stride-s", type=float, default=None)
    p.add_argument("--max-windows", type=int, default=10_000)
    p.add_argument("--quantum-s", type=float, default=0.1)
    p.add_argument("--context-budget", type=int, default=256)


def build_parser() -> _Parser:
    parser = _Parser(prog="signstream",
                     description="long-form sign-video translation tooling")
    parser.add_argument("--version", action="version",
                        version=f"signstream {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a manifest and its data files")
    p.add_argument("manifest")
    p.add_argument("--data-root")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="dataset summary statistics")
    p.add_argument("manifest")
    p.add_argument("--data-root")
    p.add_argument("--by-signer", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("make-examples", help="synthesize training examples")
    p.add_argument("manifest")
    p.add_argument("--data-root")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--n-s", type=float, default=34.0)
    p.add_argument("--m-s", type=float, default=17.0)
    p.add_argument("--p-truncate", type=float, default=0.2)
    p.add_argument("--quantum-s", type=float, default=0.1)
    p.add_argument("--context-budget", type=int, default=256)
    p.set_defaults(func=cmd_make_examples)

    p = sub.add_parser("translate", help="run a translator over manifest videos")
    p.add_argument("manifest")
    p.add_argument("--data-root")
    p.add_argument("--translator", required=True,
                   help="'oracle', 'empty', or an external command line")
    p.add_argument("--mode", required=True,
                   choices=["sentence", "context-sentence",
                            "discourse-timed", "discourse-untimed"])
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_driver_flags(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("align", help="align caption texts to videos")
    p.add_argument("manifest")
    p.add_argument("--data-root")
    p.add_argument("--method", required=True, choices=["model", "length-scaling"])
    p.add_argument("--translator", default="oracle")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_driver_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("score", help="score hypotheses against references")
    p.add_argument("--metric", required=True,
                   choices=["bleu", "timed-bleu", "frame-acc"])
    p.add_argument("hyp")
    p.add_argument("ref", nargs="?")
    p.add_argument("--eval-fps", type=float, default=30.0)
    p.add_argument("--export-segments")
    p.set_defaults(func=cmd_score)

    return parser


def _apply_config_file(argv: list[str], parser: _Parser) -> list[str]:
    """Merge key=value pairs from --config FILE as defaults; flags win."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a file argument")
    path = Path(argv[i + 1])
    argv = argv[:i] + argv[i + 2:]
    defaults = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key=value")
        key, _, value = line.partition("=")
        defaults[key.strip().replace("-", "_")] = value.strip()
    parser.set_defaults(**defaults)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(argv, parser)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except SignstreamError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
