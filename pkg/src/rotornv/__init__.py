"""rotornv: simulation and estimation toolkit for an NV spin qubit in a rotating diamond."""

from .errors import (
    CompileError,
    Diagnostic,
    FitError,
    IdentifiabilityError,
    ParseError,
    SequenceError,
    ValidationError,
)
from .geometry import (
    FieldConfig,
    PhysicalConstants,
    RotorGeometry,
    eac_amplitude,
    effective_field,
    fringe_phase_offset,
    mw_coupling,
    nv_axis,
    nv_position,
    zeeman_projection,
)
from .photophysics import (
    BeamProfile,
    LevelPopulations,
    PhotonTrace,
    RateModel,
    beam_intensity,
    expected_count_rate,
    fluorescence_rate,
    optimal_turn_on,
    readout_response,
    simulate_readout,
    state_contrast,
    steady_state,
    step_rates,
)
from .seqlang import (
    CalibrationTable,
    PulseTimeline,
    SequenceProgram,
    TimelineEvent,
    build_calibration,
    compile_timeline,
    format_program,
    parse_sequence,
)
from .spindyn import (
    EchoParams,
    PulseSpec,
    SpinState,
    apply_pulse,
    c13_envelope,
    c13_revival_time_us,
    echo_phase,
    echo_signal,
    rabi_population,
    simulate_sequence,
)
from .estimation import (
    EchoDataset,
    EchoFitModel,
    FitResult,
    fit_echo,
    fit_rabi,
    grid_oracle,
    profile_identifiability,
)
from .imaging import (
    Emitter,
    EmitterSet,
    ScanGrid,
    StrobeConfig,
    StrobedImage,
    angular_smear,
    fit_spot_width,
    render_image,
)
from .config import ExperimentConfig, config_from_dict, load_config

__version__ = "0.1.0"
