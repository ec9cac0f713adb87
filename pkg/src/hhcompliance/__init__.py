"""Hand-hygiene compliance analysis from door and dispenser sensor logs.

Modules
-------
ingest
    Sensor events to per-shift compliance records, with validity filters.
geo
    Weather grid and influenza-reporting-city joins.
featurize
    Calendar indicators and the standardized design matrix.
model
    Ridge regression with M5 selection and p-value backward elimination.
relieff
    RReliefF feature weights and cross-validated rankings.
analyze
    Marginal-effect curves and per-facility decile t-tests.
synth
    Synthetic corpora with planted effects.
pipeline, cli
    Staged runs over an artifact directory.
"""

__version__ = "0.1.0"
