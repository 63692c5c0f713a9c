"""Systemic-risk measurement with a common-factor GARCH and correlated jumps.

Library layout follows the pipeline: ``market_data`` ingests and aligns the
panels, ``common_factor``/``jumps``/``firm_mle``/``correlation`` estimate the
model, ``pricing`` turns equity into implied asset values, ``risk_engine``
simulates and computes the DD / NoD / PIR measures on rolling windows, and
``econometrics`` runs the lead-lag and predictive-power tests. ``cli`` is the
command-line front door.
"""

__version__ = "0.1.0"
