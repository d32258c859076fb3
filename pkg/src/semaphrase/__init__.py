"""Seq2seq paraphrase generation with semantic channel fusion.

Subpackages:
    tensor       float64 tensors + reverse-mode autodiff tape
    layers       attention / transformer blocks / LSTM cells
    data         annotated sentences, vocabularies, corpus I/O
    models       the five architecture families behind one interface
    metrics      BLEU / METEOR / TER
    experiments  ablation, throughput, synthetic-corpus harnesses
    cli          command-line entry point
"""

__version__ = "0.1.0"
