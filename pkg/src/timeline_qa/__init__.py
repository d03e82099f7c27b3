"""Query-driven temporal reasoning over long video timelines."""

from __future__ import annotations

__all__ = ["ENGINE_TAG", "__version__"]

__version__ = "0.1.0"

# Written into every trace header; replay refuses traces carrying another tag.
ENGINE_TAG = "timeline-qa/1"
