"""T-V benchmarking, the fibre baseline and memory comparison records."""

from .benchmark import (
    DetectionBudget,
    QuadratureTV,
    TVError,
    TVPoint,
    apply_detection_loss,
    boundary_curves,
    classical_limit,
    correct_detection,
    in_no_cloning_region,
    linear_loss,
    loss_channel,
    measure_prepare_channel,
    tv_from_ensembles,
)
from .fiber import FiberReference, fiber_reference
from .records import (
    BUILTIN_RECORDS,
    FIBER_RECORD,
    THIS_WORK_RECORD,
    DecayModelRef,
    MemoryRecord,
    RecordError,
    compare,
    load_memory_records,
    plot_data_rows,
    report_json,
    write_plot_data,
)
