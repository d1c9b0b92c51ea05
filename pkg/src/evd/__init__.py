"""evd: window-based event-camera denoising toolkit."""

from .core import (
    Event,
    EventStream,
    EventWindow,
    Label,
    SensorGeometry,
    partition_windows,
    read_events,
    validate_stream,
    write_events,
)
from .sim import NoiseSpec, SceneSpec, inject_ba_noise, poisson_count_pmf, simulate_events
from .temporal import TemporalStats, TwConfig, adaptive_t_lim, temporal_probability, tw_filter
from .bec import label_connected_domains, mark_bone_events, project_frame
from .geometry import (
    LevelSpec,
    ball_group,
    farthest_event_sampling,
    idw_interpolate,
    normalize_coords,
    relative_transform,
)
from .evaluation import FilterConfig, baf_filter, confusion_metrics, nnb_filter, rp_filter, snr_db

__version__ = "0.1.0"
