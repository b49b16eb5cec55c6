"""Multi-model online conformal prediction with graph-structured model selection."""
from ._backend import active_backend, use_backend
from .adaptation import (
    AdaptationParams,
    ModelState,
    importance_loss,
    mw_update,
    pinball_gradient,
    pinball_loss,
    scale_exponent,
    sf_ogd_update,
)
from .conformal import (
    ScoreHistory,
    ScoreParams,
    alpha_bar,
    label_scores,
    nonconformity_score,
    prediction_set,
    threshold,
)
from .engine import (
    Metrics,
    RunConfig,
    RunReport,
    StepOutcome,
    evaluate,
    gmocp_run,
    mocp_run,
    run,
    single_run,
)
from .graph import (
    GraphParams,
    GraphRealization,
    connection_pmf,
    generate_graph,
    inclusion_probability,
    node_weights,
    realize_graph,
    select_model,
    select_node_and_candidates,
)
from .streams import (
    DriftProfile,
    Stream,
    StreamFormatError,
    StreamHeader,
    StreamRecord,
    generate_stream,
    load_stream,
    read_stream,
    write_stream,
)

__version__ = "0.1.0"
