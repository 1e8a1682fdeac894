"""Battery-backed power buffer for constant-power loads under voltage sags.

Submodules:

* :mod:`~powerbuffer.phasor` -- impedance and phasor relations at the PCC
* :mod:`~powerbuffer.battery` -- Thevenin RC battery and the SOD model
* :mod:`~powerbuffer.steady_state` -- operating points and ride-through envelope
* :mod:`~powerbuffer.small_signal` -- stability, damping, poles, sensitivities
* :mod:`~powerbuffer.dynamics` -- time-domain sag simulation
* :mod:`~powerbuffer.scenario` / :mod:`~powerbuffer.cli` -- scenario files and CLI
"""
from .battery import (REFERENCE_RC_TABLE, BatteryCalibration, BatteryState, ParamTable, RCParams,
                      emf_and_resistance, params_at_current, split_resistance, update_sod)
from .dynamics import (Mode, SagEvent, SimConfig, TimeSeries, compare_discharge_profiles,
                       mismatch_power, simulate)
from .errors import (CalibrationRangeError, ConfigurationError, DomainError,
                     InfeasibleDemandError, PowerBufferError, UnstableModelError)
from .phasor import (FilterParams, InputImpedance, SequenceVoltage, SeriesImpedance,
                     buffer_voltage_dq, compute_input_impedance, max_power,
                     parallel_to_series, sequence_decompose, synth_waveforms)
from .small_signal import (LinearModel, damping, is_stable, linearize, poles,
                           sensitivities, worst_case_current, zeta_approx)
from .steady_state import (SteadyOperatingPoint, build_envelope, max_mismatch,
                           mismatch_from_vdc, operating_point, ride_through_limits,
                           vcp_ss, vdc_ss, vdc_ss_from_sag)

__version__ = "0.1.0"
