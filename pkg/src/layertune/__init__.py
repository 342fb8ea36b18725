"""Layer-wise fine-tuning depth sweeps."""
