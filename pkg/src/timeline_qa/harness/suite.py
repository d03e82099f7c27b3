"""Question suites over scripted worlds.

One JSON document per world holds the world itself plus its questions; a suite is a directory
of such documents read in file-name order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

from timeline_qa.backends.world import ScriptedWorld
from timeline_qa.core.types import Query, QueryOption, TemporalInterval, VideoDescriptor
from timeline_qa.determinism import write_json
from timeline_qa.outputs import MANIFEST_NAME
from timeline_qa.validate import validate_world_document


class QuestionMode:
    GLOBAL = "global"
    BREAKPOINT = "breakpoint"
    UNTAGGED = "untagged"


@dataclass(frozen=True)
class SuiteQuestion:
    question_id: str
    world_id: str
    video_id: str
    text: str
    gold_answer: str
    gold_interval: TemporalInterval
    options: tuple[QueryOption, ...] | None = None
    mode: str | None = None
    tags: tuple[str, ...] = ()

    @property
    def mode_label(self) -> str:
        return self.mode or QuestionMode.UNTAGGED

    def query(self, video: VideoDescriptor) -> Query:
        return Query(text=self.text, video=video, options=self.options)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "question_id": self.question_id,
            "video_id": self.video_id,
            "text": self.text,
            "gold_answer": self.gold_answer,
            "gold_interval": [self.gold_interval.start_s, self.gold_interval.end_s],
        }
        if self.options:
            out["options"] = [{"label": o.label, "text": o.text} for o in self.options]
        if self.mode:
            out["mode"] = self.mode
        if self.tags:
            out["tags"] = list(self.tags)
        return out

    @classmethod
    def from_dict(cls, world_id: str, data: Mapping[str, Any]) -> SuiteQuestion:
        options = data.get("options")
        return cls(
            question_id=data["question_id"],
            world_id=world_id,
            video_id=data["video_id"],
            text=data["text"],
            gold_answer=data["gold_answer"],
            gold_interval=TemporalInterval(
                float(data["gold_interval"][0]), float(data["gold_interval"][1])
            ),
            options=tuple(QueryOption(o["label"], o["text"]) for o in options) if options else None,
            mode=data.get("mode"),
            tags=tuple(data.get("tags", ())),
        )


@dataclass
class ScriptedSuite:
    worlds: list[ScriptedWorld] = field(default_factory=list)
    questions: list[SuiteQuestion] = field(default_factory=list)

    def world(self, world_id: str) -> ScriptedWorld:
        for w in self.worlds:
            if w.world_id == world_id:
                return w
        raise KeyError(world_id)

    def __iter__(self) -> Iterator[SuiteQuestion]:
        return iter(self.questions)

    def __len__(self) -> int:
        return len(self.questions)

    def subset(self, *, tag: str | None = None, world_id: str | None = None) -> ScriptedSuite:
        chosen = [
            q
            for q in self.questions
            if (tag is None or tag in q.tags) and (world_id is None or q.world_id == world_id)
        ]
        used = {q.world_id for q in chosen}
        return ScriptedSuite([w for w in self.worlds if w.world_id in used], chosen)

    def to_documents(self) -> list[dict[str, Any]]:
        documents = []
        for w in self.worlds:
            doc = w.to_dict()
            doc["questions"] = [q.to_dict() for q in self.questions if q.world_id == w.world_id]
            documents.append(doc)
        return documents


def suite_from_documents(documents: list[Mapping[str, Any]]) -> ScriptedSuite:
    suite = ScriptedSuite()
    seen: set[str] = set()
    for doc in documents:
        validate_world_document(doc)
        world = ScriptedWorld.from_dict(doc)
        if world.world_id in seen:
            raise ValueError(f"duplicate world id: {world.world_id}")
        seen.add(world.world_id)
        suite.worlds.append(world)
        suite.questions.extend(
            SuiteQuestion.from_dict(world.world_id, q) for q in doc.get("questions", [])
        )
    ids = [q.question_id for q in suite.questions]
    if len(set(ids)) != len(ids):
        raise ValueError("question ids must be unique across the suite")
    return suite


def load_suite(directory: str | Path) -> ScriptedSuite:
    paths = sorted(p for p in Path(directory).glob("*.json") if p.name != MANIFEST_NAME)
    documents = [json.loads(p.read_text(encoding="utf-8")) for p in paths]
    return suite_from_documents(documents)


def write_suite(suite: ScriptedSuite, directory: str | Path) -> list[Path]:
    out_dir = Path(directory)
    written = []
    for doc in suite.to_documents():
        path = out_dir / f"{doc['world_id']}.json"
        write_json(path, doc)
        written.append(path)
    return written
