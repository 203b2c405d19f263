from .augment import AugmentConfig, augment_audio, augment_video, crop_frames, flip_frames
from .batching import Batch, batch_iter, epoch_order
from .formats import read_frames, read_wav, write_frames, write_wav
from .manifest import (SPLITS, Clip, ClipRecord, ClipSet, DatasetManifest, Rect, extract_mouth_roi,
                       load_lrw_layout, read_manifest)
from .synthetic import (SyntheticSpec, class_signatures, generate_synthetic, synthesize,
                        template_classify)
