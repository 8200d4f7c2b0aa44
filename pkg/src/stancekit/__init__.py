"""Stance detection for polarized topics from retweet behaviour.

The package covers the full route from raw tweets to evaluation tables:
corpus loading, tokenization, retweet/text feature vectors, a neighbour
embedding, mean-shift clustering, label bootstrapping, supervised
baselines, and abstention-aware metrics.  Heavy kernels are JIT compiled
when numba is importable; set STANCEKIT_DISABLE_NUMBA=1 to force the
pure-numpy fallbacks.
"""

from ._accel import ENV_FLAG, NUMBA_ENABLED
from .classify import (LinearModel, TextModel, aggregate_user, ft_loss_and_grads,
                       ft_predict, ft_train, load_external_scores, load_linear_model,
                       load_text_model, save_linear_model, save_text_model,
                       svm_decision, svm_predict, svm_train)
from .cluster import (UNASSIGNED, ClusterAssignment, ClusteringError,
                      estimate_bandwidth, majority_label, mean_shift,
                      write_assignment_csv)
from .corpus import (CorpusFormatError, Tweet, UserCorpus, UserRecord,
                     load_corpus, load_gold_labels, merge_timeline,
                     save_gold_labels, select_active_users, with_labels,
                     write_tweets_jsonl)
from .embedding import (Embedding, FuzzyGraph, NeighborGraph, UmapParams,
                        fuzzy_simplicial_set, knn_graph, optimize_layout,
                        pairwise_cosine_distances, umap, umap_from_distances,
                        write_embedding_csv)
from .evalkit import (ConfusionMatrix, MetricsReport, ReportRow, confusion,
                      metrics, read_predictions_tsv, read_report_csv, summarize,
                      write_predictions_tsv, write_report_csv, write_report_json)
from .features import (RT_MODE, TEXT_MODE, Vocabulary, build_vocab,
                       cosine_similarity, load_vocab_tsv, save_vocab_tsv,
                       user_vector, vocab_hash)
from .pipeline import (METHODS, ExperimentConfig, UnsupervisedParams,
                       align_to_gold, bootstrap_training_set,
                       classify_user_unsupervised, compute_predictions,
                       corpus_from_labeled, run_experiment)
from .preprocess import tokenize
from .synth import CountSpec, SynthParams, generate, gold_labels

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
