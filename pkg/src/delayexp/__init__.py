"""Fixed-delay reliability bounds and feedback coding simulators for DMCs."""

__version__ = "0.1.0"

from .channel import (
    Channel,
    InputDist,
    CapacityResult,
    make_dmc,
    make_bsc,
    make_bec,
    load_channel,
    capacity,
    capacity_detail,
    mutual_information,
    conditional_divergence,
    is_symmetric,
)
from .curves import (
    CurveCell,
    CurveTable,
    convert,
    crossover_rate,
    emit_csv,
    emit_plot_script,
    sweep,
)
from .errors import BadInputError, DelayexpError, DomainError
from .exponents import (
    CapacitySlopes,
    ExponentValue,
    ParametricPoint,
    achieved_exponent,
    achieved_exponent_at_rate,
    bec_feedback_exponent,
    capacity_slopes,
    e0_max,
    focusing_bound,
    gallager_e0,
    haroutunian_oracle,
    list_random_coding,
    overhead_fraction,
    random_coding,
    sphere_packing,
)
from .sim_anytime import (
    BlockCodebook,
    FlowCode,
    FlowDecoder,
    FlowMessage,
    FortifiedEncoder,
    SchemeConfig,
    SchemeRunResult,
    flow_decode,
    flow_encode,
    fortified_run,
    list_decode_block,
    parse_history,
    synthesized_noiseless_reference,
    synthesized_run,
)
from .sim_queue import (
    DelayErrorTable,
    FitResult,
    QueueChain,
    birth_death,
    fit_exponent,
    merge_tables,
    queue_level_frequencies,
    replica_seeds,
    run_replicas,
    simulate_bec_feedback,
    tail_exponent,
)

__all__ = [
    "BadInputError",
    "BlockCodebook",
    "CapacityResult",
    "CapacitySlopes",
    "Channel",
    "CurveCell",
    "CurveTable",
    "DelayErrorTable",
    "DelayexpError",
    "DomainError",
    "ExponentValue",
    "FitResult",
    "FlowCode",
    "FlowDecoder",
    "FlowMessage",
    "FortifiedEncoder",
    "InputDist",
    "ParametricPoint",
    "QueueChain",
    "SchemeConfig",
    "SchemeRunResult",
    "achieved_exponent",
    "achieved_exponent_at_rate",
    "bec_feedback_exponent",
    "birth_death",
    "capacity",
    "capacity_detail",
    "capacity_slopes",
    "conditional_divergence",
    "convert",
    "crossover_rate",
    "e0_max",
    "emit_csv",
    "emit_plot_script",
    "fit_exponent",
    "flow_decode",
    "flow_encode",
    "focusing_bound",
    "fortified_run",
    "gallager_e0",
    "haroutunian_oracle",
    "is_symmetric",
    "list_decode_block",
    "list_random_coding",
    "load_channel",
    "make_bec",
    "make_bsc",
    "make_dmc",
    "merge_tables",
    "mutual_information",
    "overhead_fraction",
    "parse_history",
    "queue_level_frequencies",
    "random_coding",
    "replica_seeds",
    "run_replicas",
    "simulate_bec_feedback",
    "sphere_packing",
    "sweep",
    "synthesized_noiseless_reference",
    "synthesized_run",
    "tail_exponent",
    "__version__",
]
