"""Skip-aggregation graph convolution for user-post bipartite graphs.

A tweet's second-order neighbors in a user-tweet bipartite graph are other
tweets, bridged by the users who posted or retweeted them. The classifiers
here aggregate those second-order neighborhoods directly, with edge-type
aware transforms, which sidesteps the user-feature initialization problem
that first-order graph models face.
"""

from .autodiff import (
    Parameter,
    Tape,
    Tensor,
    aggregate,
    bce_loss,
    concat_cols,
    gather_rows,
    load_checkpoint,
    matmul,
    relu,
    row_l2_normalize,
    save_checkpoint,
    segment_aggregate,
    select_rows,
    sigmoid,
)
from .errors import (
    FormatError,
    TrainingDivergedError,
    TrialError,
    ValidationError,
)
from .estimators import (
    ContentOnlyClassifier,
    FirstOrderGNNClassifier,
    SAGNNClassifier,
)
from .experiments import (
    Dataset,
    ExperimentConfig,
    TrialSummary,
    load_dataset,
    run_experiment,
    run_trials,
)
from .graph import (
    BipartiteGraph,
    EdgeType,
    GraphStats,
    build_graph,
    load_graph,
    read_edge_tsv,
    save_graph,
    stats,
    write_edge_tsv,
)
from .metrics import (
    MetricsReport,
    Split,
    accuracy,
    bucket_metrics,
    evaluate_predictions,
    f1_score,
    roc_auc,
    stratified_split,
)
from .model import (
    BaselineConfig,
    ContentConfig,
    SAGNNConfig,
    TrainConfig,
    baseline_forward,
    content_forward,
    init_user_features,
    predict_scores,
    sa_layer_forward,
    sagnn_forward,
    train_model,
)
from .optim import OptimConfig, adamw_step, lr_scale
from .pipeline import (
    HashtagLexicon,
    LabeledCorpus,
    Polarity,
    RawPost,
    expand_lexicon,
    extract_hashtags,
    featurize,
    label_and_clean,
)
from .sampling import (
    SampledNeighborhood,
    WalkConfig,
    exact_two_step_distribution,
    expand_batch,
    fixed_blocks,
    sample_first_order,
    sample_neighborhood,
)
from .synth import SynthConfig, SynthDataset, degree_report, generate

__version__ = "0.1.0"
