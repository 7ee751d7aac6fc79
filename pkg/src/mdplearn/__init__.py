"""Learning labelled Markov chains and MDPs from observation traces.

The package fits hidden-state models to label/action sequences with a
Baum-Welch variant and can steer data collection toward under-sampled
state/action pairs while learning.
"""

from .active import (
    ActionCountMatrix,
    ActiveSchedule,
    ActiveTrace,
    BeliefScheduler,
    CurvePoint,
    MemorylessScheduler,
    action_counts,
    active_learn,
    active_sample,
    belief_scheduler,
    opposite_scheduler,
)
from .builtin import grid_world_model, random_model, reber_model, street_crossing_model
from .em import (
    AllSequencesSkippedError,
    EmConfig,
    EmReport,
    mc_bw,
    mdp_bw,
    smooth_model,
    update,
)
from .evaluate import (
    KlEstimate,
    MeanLogLikelihood,
    MetricsRow,
    bounded_reachability,
    bounded_until,
    kl_estimate,
    mean_log_likelihood,
)
from .inference import (
    Posteriors,
    TrellisPair,
    ZeroLikelihoodError,
    backward,
    forward,
    forward_backward,
    log_likelihood,
    posteriors,
)
from .models import (
    ERR_LABEL,
    ActionSet,
    Alphabet,
    Dataset,
    DatasetParseError,
    Model,
    Observation,
    Scheduler,
    UniformScheduler,
    Violation,
    VocabularyError,
    read_dataset,
    read_model,
    validate_model,
    write_dataset,
    write_model,
)
from .sim import (
    LengthSampler,
    ProtocolError,
    ReplaySystem,
    SimulatedSystem,
    SystemHandle,
    passive_sample,
    sample_length,
    sample_trace,
    simulate,
)

__version__ = "0.1.0"
