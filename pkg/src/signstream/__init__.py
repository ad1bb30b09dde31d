"""Tooling for long-form sign-language video translation: caption tracks,
training-clip synthesis, the control-token task grammar, chunked
autoregressive inference, and timed-translation metrics."""

from .captions import (Caption, CaptionTrack, TimeSpan, TrackStats,
                       WindowCaptions, classify_window_captions, compute_stats,
                       quantize_ms)
from .chunker import (ChunkRecord, ClipSpec, SamplerConfig, build_chunk_records,
                      chunk_layout, keyed_rng, sample_clip, sample_clip_draw,
                      sample_manifest_clips)
from .driver import (AlignmentOutcome, DecodeTrace, DriverConfig,
                     EmptyTranslator, JitterOracle, OracleTranslator,
                     StutterTranslator, TranslatorPort, jitter_track,
                     run_alignment, run_sentence_level, run_timed_translation,
                     run_untimed_discourse)
from .features import (FeatureSlice, FeatureTrack, read_feature_track,
                       slice_features, synth_feature_track, write_feature_track)
from .grammar import (ModelExample, TaskDescriptor, TimestampGrammar,
                      parse_timed_track, render_example, render_timed_track,
                      sample_task, truncate_context)
from .manifest import ManifestEntry, dump_manifest, load_manifest
from .metrics import (AlignmentReport, BleuReport, char_times, corpus_bleu,
                      export_segments, frame_accuracy, length_scaling_align,
                      reslice_by_reference, timed_bleu, tokenize_intl)
from .subproc import SubprocessTranslator
from .subtitles import parse_caption_file, serialize_caption_file

__version__ = "0.1.0"

__all__ = [
    "AlignmentOutcome", "AlignmentReport", "BleuReport", "Caption",
    "CaptionTrack", "ChunkRecord", "ClipSpec", "DecodeTrace", "DriverConfig",
    "EmptyTranslator", "FeatureSlice", "FeatureTrack", "JitterOracle",
    "ManifestEntry", "ModelExample", "OracleTranslator", "SamplerConfig",
    "StutterTranslator", "SubprocessTranslator", "TaskDescriptor", "TimeSpan",
    "TimestampGrammar", "TrackStats", "TranslatorPort", "WindowCaptions",
    "build_chunk_records", "char_times", "chunk_layout",
    "classify_window_captions", "compute_stats", "corpus_bleu",
    "dump_manifest", "export_segments", "frame_accuracy", "jitter_track",
    "keyed_rng", "length_scaling_align", "load_manifest", "parse_caption_file",
    "parse_timed_track", "quantize_ms", "read_feature_track",
    "render_example", "render_timed_track", "reslice_by_reference",
    "run_alignment", "run_sentence_level", "run_timed_translation",
    "run_untimed_discourse", "sample_clip", "sample_clip_draw",
    "sample_manifest_clips", "sample_task", "serialize_caption_file",
    "slice_features", "synth_feature_track", "timed_bleu", "tokenize_intl",
    "truncate_context", "write_feature_track", "__version__",
]
