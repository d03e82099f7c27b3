from __future__ import annotations

from timeline_qa.backends.ports import CountingVisionPort, LLMPort, Ports, VisionPort
from timeline_qa.backends.scripted import PatternLLM, ScriptedLLM, ScriptedVision, scripted_ports
from timeline_qa.backends.world import PlannerPolicy, ScriptedWorld, scripted_embed

__all__ = [
    "CountingVisionPort",
    "LLMPort",
    "PatternLLM",
    "PlannerPolicy",
    "Ports",
    "ScriptedLLM",
    "ScriptedVision",
    "ScriptedWorld",
    "VisionPort",
    "scripted_embed",
    "scripted_ports",
]
