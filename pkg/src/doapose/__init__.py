"""Audio direction-of-arrival cues for relative camera rotation.

Simulate microphone-array audio on a moving camera, compute MUSIC DOA
spectra and binaural cues, estimate relative yaw from audio, fuse it with
a pose prior and score the result with AUC@tau and yaw MAE.
"""

__version__ = "0.1.0"

from .binaural import BinauralCues, HeadModel, binauralize, extract_cues, fuse_audio_features, gcc_phat
from .doa import ArrayGeometry, DoaSpectrum, MusicConfig, doa_peaks, music_spectrum, spatial_covariance, steering_vector
from .dsp import (
    MultiChannelClip,
    Spectrogram,
    StftConfig,
    channel_diff_spectrogram,
    istft,
    l1_spec_distance,
    mono_downmix,
    stft,
)
from .estimate import (
    PosePrior,
    YawEstimate,
    circular_alignment,
    corrupt_prior,
    estimate_yaw_audio,
    fuse_with_prior,
)
from .evaluation import ErrorSample, MetricsReport, auc_at, chance_baseline, evaluate_run, mae
from .geometry import (
    Pose,
    RelativePose,
    Rotation,
    mean_rotation,
    relative_pose,
    rotation_error_deg,
    translation_angle_error_deg,
    yaw_of,
)
from .sim import CapturePair, DatasetSpec, Scene, SignalSpec, SourceSpec, generate_dataset, generate_pair, render_clip
