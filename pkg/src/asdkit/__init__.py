"""Machine-sound anomaly detection toolkit.

Feature extraction with mel-spaced, evenly spaced, or gammatone filter
banks; parameter-free SimAM feature enhancement (global, local, or
per-machine customized); deterministic baseline embeddings with an import
path for external models; dual-domain k=1 nearest-neighbor scoring with
per-domain score normalization; and DCASE-style AUC/pAUC evaluation.
"""

from .corpus import (ClipMetadata, Waveform, build_attribute_classes,
                     format_clip_name, index_corpus, parse_clip_name,
                     read_wav, write_wav)
from .dsp import FrameParams, PowerSpectrogram, condition, pre_emphasize, stft_power
from .filterbank import (FilterBank, LogMelSpectrogram, apply_log_fbank, build_bank,
                         build_gammatone_bank, build_triangular_bank, mel_edges,
                         read_feature, uniform_edges, write_feature)
from .enhance import (SimamParams, enhance, enhance_customized, enhance_global,
                      enhance_local, simam_weights)
from .embed import (Embedding, EmbeddingSet, baseline_embed, read_embeddings,
                    write_embeddings)
from .backend import (AnomalyScore, DetectorPair, DomainStats, cosine_distance,
                      knn_raw_score, score_batch, write_scores_csv)
from .metrics import (LabeledScore, MachineReport, SummaryReport, auc, domain_auc,
                      harmonic_score, machine_report, pauc, summarize)
from .pipeline import PipelineConfig, config_from_mapping, run_eval, run_extract
from .synth import SynthSpec, generate_corpus

__version__ = "0.1.0"
