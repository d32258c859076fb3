"""The five architecture families behind one train/decode interface."""

from ..data import VocabBundle
from .base import AttentionTrace, DecodeResult, EncoderOutput, LossReport, Seq2SeqModel
from .config import CHANNEL_MASKS, FAMILIES, PB_FAMILIES, ModelConfig
from .io import load_model, save_model
from .lstm import MultiChannelResidualLstm, StackedResidualLstm
from .nvlstm import LatentSample, NestedVariationalLstm
from .transformer import MultiChannelTransformer, TransformerSeq2Seq

_FAMILY_CLASSES = {
    "transformer": TransformerSeq2Seq,
    "transformer_pb": MultiChannelTransformer,
    "sr_lstm": StackedResidualLstm,
    "sr_lstm_pb": MultiChannelResidualLstm,
    "nv_lstm": NestedVariationalLstm,
}


def build_model(config: ModelConfig, vocabs: VocabBundle) -> Seq2SeqModel:
    return _FAMILY_CLASSES[config.family](config, vocabs)


__all__ = [
    "AttentionTrace",
    "CHANNEL_MASKS",
    "DecodeResult",
    "EncoderOutput",
    "FAMILIES",
    "LatentSample",
    "LossReport",
    "ModelConfig",
    "MultiChannelResidualLstm",
    "MultiChannelTransformer",
    "NestedVariationalLstm",
    "PB_FAMILIES",
    "Seq2SeqModel",
    "StackedResidualLstm",
    "TransformerSeq2Seq",
    "build_model",
    "load_model",
    "save_model",
]
