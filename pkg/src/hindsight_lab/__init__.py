"""Goal-conditioned RL lab: hindsight relabeling, rank-based prioritized
replay (single- and two-queue variants), and hindsight policy gradients,
all verifiable at desk scale on bit-flip and grid environments."""

__version__ = "0.1.0"
