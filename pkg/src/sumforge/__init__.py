"""Corpus tooling for semi-supervised meeting summarization.

The package covers the data side of two training strategies for
transcription-to-report summarization: target-side denoising pair
generation (span infilling plus sentence shuffling over reports) and
back-summarization (synthesizing transcriptions for unaligned reports
with a reversed model), together with the ROUGE / copy-rate metrics,
weighted training schedules, and beam-search decoding the pipeline
needs. Neural model training itself stays behind pluggable backends.
"""

__version__ = "0.1.0"
