from .corners import front_face_corners
from .maskio import read_masks, write_masks
from .masks import InstanceMask, MaskNoise, corrupt_masks, mask_iou, render_masks
from .metrics import ap_at_iou
from .pnp import planar_pnp
from .tracking import (GroupModel, TrackerNoise, TrackState, TrackStatus, build_group_model, inject_jump,
                       start_tracking, track_step, tracker_reinitialize)
