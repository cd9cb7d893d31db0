"""memematch: visual similarity measures and an evaluation harness for
matching meme images to reference images under two task definitions
(shared background vs any shared visual element)."""

__version__ = "0.1.0"
