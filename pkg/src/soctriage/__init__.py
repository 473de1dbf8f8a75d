"""SOC triage engine.

Event ingestion, an analyst filter DSL, experience retrieval driven by
priority-ordered rule relaxation, a recurrent sequence classifier with
adversarial hardening, and Petri-net checks over filter workflows.
"""

__version__ = "0.1.0"
