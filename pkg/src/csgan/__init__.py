"""Two-stage adversarial generation of code-switched text from monolingual corpora."""
from .corpus import (
    BOS,
    EOS,
    PAD,
    UNK,
    CorpusSet,
    Lang,
    Origin,
    SentenceRecord,
    SynthConfig,
    Vocabulary,
    build_vocabulary,
    decode_to_text,
    encode_sentence,
    synth_corpora,
    tag_tokens,
)
from .errors import ConfigurationError, InvariantError, NonFiniteError, ShapeError, TrainingError
from .metrics import (
    CsMetricsReport,
    TagStream,
    burstiness,
    compare_reports,
    corpus_report,
    i_index,
    language_entropy,
    m_index,
)
from .model import STAGE1, STAGE2, Batch, StageBinding, Style, StyleTransferModel, TransformerConfig
from .training import (
    StageConfig,
    generate_negatives,
    pretrain_generator,
    run_pipeline,
    train_stage,
)

__version__ = "0.1.0"
