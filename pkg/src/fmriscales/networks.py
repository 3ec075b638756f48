"""The six brain networks and their fixed ROI counts (160 ROIs total)."""

NETWORK_ROI_COUNTS = {
    "default_mode": 34,
    "frontoparietal": 21,
    "cingulo_opercular": 32,
    "sensorimotor": 33,
    "occipital": 22,
    "cerebellum": 18,
}

NETWORK_NAMES = tuple(NETWORK_ROI_COUNTS)

TOTAL_ROIS = sum(NETWORK_ROI_COUNTS.values())  # 160


def expected_roi_count(network):
    """ROI count for a canonical network name, or None for custom networks."""
    return NETWORK_ROI_COUNTS.get(network)


def network_for_roi_count(n_rois):
    """Canonical network name whose ROI count equals ``n_rois``, or None."""
    for name, count in NETWORK_ROI_COUNTS.items():
        if count == n_rois:
            return name
    return None
