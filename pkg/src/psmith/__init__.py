"""psmith: offline few-shot prompt synthesis and execution-accuracy
evaluation for cross-domain Text-to-SQL."""

__version__ = "0.1.0"
