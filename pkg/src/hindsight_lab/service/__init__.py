"""HTTP service wrapping the lab: submit experiment configs, get CSV back."""
