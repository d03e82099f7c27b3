"""The built-in small suite: three scripted worlds with twenty questions each.

Every world has eight long events (one per block, visible from any window that touches them),
eight short events (only a glimpse is visible from a full-length window, so a focused second
look is needed) and four two-event questions whose evidence spans two long events (the answer
needs what was seen earlier, i.e. accumulated memory).

Embeddings are orthonormal basis vectors: index 0 is the background, each event owns one
further axis. A two-event question's keyword leans towards its first event.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from timeline_qa.backends.world import (
    AnswerRule,
    PlannerPolicy,
    ScriptedEvent,
    ScriptedVideo,
    ScriptedWorld,
)
from timeline_qa.core.types import QueryOption, TemporalInterval, VideoDescriptor, freeze_vector
from timeline_qa.harness.suite import QuestionMode, ScriptedSuite, SuiteQuestion

DIMENSION = 32
BLOCKS = 8
PAIR_WEIGHTS = (0.8, 0.6)
PARTIAL_ANSWER = "uncertain"


@dataclass(frozen=True)
class _Fact:
    description: str
    phrase: str
    question: str
    answer: str
    options: tuple[str, ...] = ()


@dataclass(frozen=True)
class _Pair:
    first: int
    second: int
    question: str
    answer: str


@dataclass(frozen=True)
class _WorldPlan:
    world_id: str
    video_id: str
    duration_s: float
    block_s: float
    long_span: tuple[float, float]
    short_span: tuple[float, float]
    background: str
    glimpse: str
    longs: tuple[_Fact, ...]
    shorts: tuple[_Fact, ...]
    pairs: tuple[_Pair, ...]
    seed: int
    stagger_long: bool = False


_KITCHEN = _WorldPlan(
    world_id="kitchen",
    video_id="kitchen-1200",
    duration_s=1200.0,
    block_s=150.0,
    long_span=(10.0, 70.0),
    short_span=(93.0, 117.0),
    background="the kitchen is quiet",
    glimpse="someone moves quickly near the counter",
    stagger_long=True,
    seed=11,
    longs=(
        _Fact(
            "the chef slices a red onion on the wooden board",
            "slices a red onion",
            "What vegetable does the chef slice on the wooden board?",
            "red onion",
        ),
        _Fact(
            "a pot of pasta boils over on the back burner",
            "pasta boils over",
            "What boils over on the back burner?",
            "pasta",
        ),
        _Fact(
            "the assistant whisks eggs in a steel bowl",
            "whisks eggs",
            "What does the assistant whisk in the steel bowl?",
            "B",
            ("cream", "eggs", "batter", "gravy"),
        ),
        _Fact(
            "the chef rolls out pizza dough with a rolling pin",
            "rolls out pizza dough",
            "What does the chef roll out with the rolling pin?",
            "pizza dough",
        ),
        _Fact(
            "a tray of bread comes out of the oven golden brown",
            "bread comes out of the oven",
            "What comes out of the oven golden brown?",
            "bread",
        ),
        _Fact(
            "the chef plates grilled salmon with lemon",
            "plates grilled salmon",
            "Which fish does the chef plate with lemon?",
            "C",
            ("cod", "tuna", "salmon", "trout"),
        ),
        _Fact(
            "the assistant washes a stack of plates in the sink",
            "washes a stack of plates",
            "What does the assistant wash in the sink?",
            "plates",
        ),
        _Fact(
            "the chef tastes tomato soup from a ladle",
            "tastes tomato soup",
            "What soup does the chef taste from the ladle?",
            "tomato soup",
        ),
    ),
    shorts=(
        _Fact(
            "a cat jumps onto the counter and knocks over a salt shaker",
            "knocks over a salt shaker",
            "What does the cat knock over on the counter?",
            "salt shaker",
        ),
        _Fact(
            "the timer on the microwave flashes 3:15",
            "microwave flashes 3:15",
            "What time does the microwave timer flash?",
            "3:15",
        ),
        _Fact(
            "the assistant drops a silver spoon on the floor",
            "drops a silver spoon",
            "What does the assistant drop on the floor?",
            "silver spoon",
        ),
        _Fact(
            "a delivery driver hands over a crate of lemons",
            "crate of lemons",
            "What does the delivery driver hand over?",
            "A",
            ("a crate of lemons", "a sack of flour", "a box of eggs"),
        ),
        _Fact(
            "the chef sprinkles blue salt flakes on the steak",
            "blue salt flakes",
            "What does the chef sprinkle on the steak?",
            "blue salt flakes",
        ),
        _Fact(
            "a smoke alarm blinks red above the stove",
            "smoke alarm blinks red",
            "What blinks red above the stove?",
            "smoke alarm",
        ),
        _Fact(
            "the assistant writes table nine on the order slip",
            "writes table nine",
            "Which table number does the assistant write on the order slip?",
            "nine",
        ),
        _Fact(
            "a glass jar of honey slips and cracks",
            "jar of honey slips",
            "What slips and cracks on the counter?",
            "jar of honey",
        ),
    ),
    pairs=(
        _Pair(0, 4, "What is baked after the onion has been sliced?", "bread"),
        _Pair(1, 5, "What is plated after the pasta boiled over?", "salmon"),
        _Pair(2, 6, "What is washed after the eggs have been whisked?", "plates"),
        _Pair(3, 7, "What is tasted once the pizza dough has been rolled?", "tomato soup"),
    ),
)

_RESCUE = _WorldPlan(
    world_id="rescue",
    video_id="rescue-1200",
    duration_s=1200.0,
    block_s=150.0,
    long_span=(10.0, 70.0),
    short_span=(93.0, 117.0),
    background="an empty suburban street",
    glimpse="a figure passes at the edge of the frame",
    stagger_long=True,
    seed=23,
    longs=(
        _Fact(
            "a brown dog digs under the garden fence",
            "dog digs under the garden fence",
            "Where does the brown dog dig?",
            "under the garden fence",
        ),
        _Fact(
            "the dog chases a red ball across the lawn",
            "chases a red ball",
            "What does the dog chase across the lawn?",
            "red ball",
        ),
        _Fact(
            "a woman in a yellow coat calls the dog inside",
            "yellow coat calls the dog",
            "What colour is the coat of the woman calling the dog inside?",
            "D",
            ("red", "green", "blue", "yellow"),
        ),
        _Fact(
            "the dog sleeps on a blue blanket by the fireplace",
            "sleeps on a blue blanket",
            "What does the dog sleep on by the fireplace?",
            "blue blanket",
        ),
        _Fact(
            "a girl finds an injured cat under a parked car",
            "injured cat under a parked car",
            "Where does the girl find the cat?",
            "under a parked car",
        ),
        _Fact(
            "the girl wraps the cat in a striped towel",
            "wraps the cat in a striped towel",
            "What does the girl wrap the cat in?",
            "striped towel",
        ),
        _Fact(
            "the girl carries the cat into the animal hospital",
            "carries the cat into the animal hospital",
            "Where does the girl carry the cat?",
            "animal hospital",
        ),
        _Fact(
            "a veterinarian bandages the cat's front leg",
            "bandages the cat's front leg",
            "Which leg does the veterinarian bandage?",
            "front leg",
        ),
    ),
    shorts=(
        _Fact(
            "a squirrel steals a walnut from the bird feeder",
            "steals a walnut",
            "What does the squirrel steal from the bird feeder?",
            "walnut",
        ),
        _Fact(
            "the dog's tag reads BUSTER",
            "tag reads BUSTER",
            "What name is written on the dog's tag?",
            "Buster",
        ),
        _Fact(
            "a mail carrier drops a green envelope",
            "green envelope",
            "What colour envelope does the mail carrier drop?",
            "green",
        ),
        _Fact(
            "the clock on the porch shows 4:40",
            "porch shows 4:40",
            "What time does the porch clock show?",
            "4:40",
        ),
        _Fact(
            "the cat's collar has a silver bell",
            "collar has a silver bell",
            "What hangs from the cat's collar?",
            "silver bell",
        ),
        _Fact(
            "the bus to the hospital is number 42",
            "bus to the hospital is number 42",
            "Which bus number goes to the hospital?",
            "B",
            ("17", "42", "9"),
        ),
        _Fact(
            "a nurse writes the name Mittens on the chart",
            "name Mittens",
            "What name does the nurse write on the chart?",
            "Mittens",
        ),
        _Fact(
            "the girl pays with a purple wallet",
            "purple wallet",
            "What colour wallet does the girl pay with?",
            "purple",
        ),
    ),
    pairs=(
        _Pair(4, 6, "Why is the cat taken to the animal hospital?", "it was injured"),
        _Pair(5, 7, "What happens to the cat after it is wrapped up?", "its leg is bandaged"),
        _Pair(0, 2, "Who calls the dog in after it dug under the fence?", "a woman"),
        _Pair(1, 3, "Where does the dog rest after chasing the ball?", "by the fireplace"),
    ),
)

_STREET = _WorldPlan(
    world_id="street",
    video_id="street-2400",
    duration_s=2400.0,
    block_s=300.0,
    long_span=(20.0, 110.0),
    short_span=(153.0, 177.0),
    background="traffic flows along a city street",
    glimpse="something flickers far down the street",
    seed=37,
    longs=(
        _Fact(
            "a cyclist in a red helmet runs the light",
            "red helmet runs the light",
            "What colour helmet does the cyclist running the light wear?",
            "red",
        ),
        _Fact(
            "a food truck parks beside the fountain",
            "food truck parks beside the fountain",
            "What parks beside the fountain?",
            "food truck",
        ),
        _Fact(
            "two pigeons fight over a pretzel",
            "fight over a pretzel",
            "What do the two pigeons fight over?",
            "pretzel",
        ),
        _Fact(
            "a street musician plays a saxophone",
            "plays a saxophone",
            "Which instrument does the street musician play?",
            "C",
            ("violin", "guitar", "saxophone", "accordion"),
        ),
        _Fact(
            "a taxi splashes water onto the sidewalk",
            "taxi splashes water",
            "What splashes water onto the sidewalk?",
            "taxi",
        ),
        _Fact(
            "a man loses his umbrella to the wind",
            "loses his umbrella",
            "What does the man lose to the wind?",
            "umbrella",
        ),
        _Fact(
            "a parade of drummers march past the bakery",
            "drummers march past the bakery",
            "Who marches past the bakery?",
            "drummers",
        ),
        _Fact(
            "workers hang a banner over the bank entrance",
            "hang a banner over the bank",
            "What do workers hang over the bank entrance?",
            "banner",
        ),
    ),
    shorts=(
        _Fact(
            "a bus shows route 17 on its sign",
            "route 17",
            "Which route number does the bus sign show?",
            "17",
        ),
        _Fact(
            "a child releases an orange balloon",
            "orange balloon",
            "What colour balloon does the child release?",
            "orange",
        ),
        _Fact(
            "a window cleaner drops a squeegee",
            "drops a squeegee",
            "What does the window cleaner drop?",
            "squeegee",
        ),
        _Fact(
            "the pharmacy sign reads OPEN 24H",
            "reads OPEN 24H",
            "What does the pharmacy sign read?",
            "open 24h",
        ),
        _Fact(
            "a courier's bike carries a yellow crate",
            "yellow crate",
            "What colour crate is on the courier's bike?",
            "yellow",
        ),
        _Fact(
            "a dog walker holds five leashes",
            "holds five leashes",
            "How many leashes does the dog walker hold?",
            "A",
            ("five", "three", "seven"),
        ),
        _Fact(
            "a woman buys tulips from the kiosk",
            "buys tulips",
            "What flowers does the woman buy from the kiosk?",
            "tulips",
        ),
        _Fact(
            "the clock tower strikes noon",
            "clock tower strikes noon",
            "What time does the clock tower strike?",
            "noon",
        ),
    ),
    pairs=(
        _Pair(0, 4, "What splashes the sidewalk after the cyclist ran the light?", "a taxi"),
        _Pair(1, 5, "What is lost to the wind after the food truck parked?", "an umbrella"),
        _Pair(2, 6, "Who passes the bakery after the pigeons fought?", "drummers"),
        _Pair(3, 7, "What is hung over the bank after the saxophone played?", "a banner"),
    ),
)

WORLD_PLANS = (_KITCHEN, _RESCUE, _STREET)


def _axis(index: int) -> tuple[float, ...]:
    return freeze_vector(np.eye(DIMENSION)[index])


def _options(fact: _Fact) -> tuple[QueryOption, ...] | None:
    if not fact.options:
        return None
    return tuple(QueryOption(chr(ord("A") + i), text) for i, text in enumerate(fact.options))


def _long_interval(plan: _WorldPlan, block: int) -> TemporalInterval:
    start, end = plan.long_span
    offset = block * plan.block_s
    stagger = 5.0 * (block % 3) if plan.stagger_long else 0.0
    return TemporalInterval(offset + start, offset + end + stagger)


def _short_interval(plan: _WorldPlan, block: int) -> TemporalInterval:
    start, end = plan.short_span
    offset = block * plan.block_s
    return TemporalInterval(offset + start, offset + end)


def build_world(plan: _WorldPlan) -> tuple[ScriptedWorld, list[SuiteQuestion]]:
    events: list[ScriptedEvent] = []
    texts: list[tuple[str, tuple[float, ...]]] = []
    rules: list[AnswerRule] = []
    questions: list[SuiteQuestion] = []

    def add_question(
        kind: str,
        n: int,
        fact_question: str,
        answer: str,
        evidence: Sequence[str],
        keyword: tuple[float, ...],
        gold: TemporalInterval,
        mode: str,
        options: tuple[QueryOption, ...] | None = None,
    ) -> None:
        texts.append((fact_question, keyword))
        rules.append(AnswerRule(fact_question, answer, tuple(evidence), PARTIAL_ANSWER))
        questions.append(
            SuiteQuestion(
                question_id=f"{plan.world_id}-{kind}-{n}",
                world_id=plan.world_id,
                video_id=plan.video_id,
                text=fact_question,
                gold_answer=answer,
                gold_interval=gold,
                options=options,
                mode=mode,
                tags=(kind,),
            )
        )

    long_axes = []
    for block, fact in enumerate(plan.longs):
        axis = 1 + block
        long_axes.append(axis)
        interval = _long_interval(plan, block)
        events.append(ScriptedEvent(f"long-{block}", interval, fact.description, _axis(axis)))
        add_question(
            "long",
            block,
            fact.question,
            fact.answer,
            [fact.phrase],
            _axis(axis),
            interval,
            QuestionMode.GLOBAL,
            _options(fact),
        )

    for block, fact in enumerate(plan.shorts):
        axis = 1 + BLOCKS + block
        interval = _short_interval(plan, block)
        events.append(
            ScriptedEvent(
                f"short-{block}", interval, fact.description, _axis(axis), glimpse=plan.glimpse
            )
        )
        add_question(
            "short",
            block,
            fact.question,
            fact.answer,
            [fact.phrase],
            _axis(axis),
            interval,
            QuestionMode.BREAKPOINT,
            _options(fact),
        )

    w_first, w_second = PAIR_WEIGHTS
    for n, pair in enumerate(plan.pairs):
        keyword = freeze_vector(
            w_first * np.eye(DIMENSION)[long_axes[pair.first]]
            + w_second * np.eye(DIMENSION)[long_axes[pair.second]]
        )
        add_question(
            "pair",
            n,
            pair.question,
            pair.answer,
            [plan.longs[pair.first].phrase, plan.longs[pair.second].phrase],
            keyword,
            _long_interval(plan, pair.first),
            QuestionMode.GLOBAL,
        )

    video = ScriptedVideo(
        descriptor=VideoDescriptor.from_duration(plan.video_id, plan.duration_s),
        events=tuple(sorted(events, key=lambda e: (e.interval.start_s, e.event_id))),
        background_embedding=_axis(0),
        background_description=plan.background,
    )
    world = ScriptedWorld(
        world_id=plan.world_id,
        dimension=DIMENSION,
        videos=(video,),
        text_embeddings=tuple(texts),
        answer_rules=tuple(rules),
        planner_policy=PlannerPolicy.HEURISTIC,
        seed=plan.seed,
    )
    return world, questions


def default_suite() -> ScriptedSuite:
    suite = ScriptedSuite()
    for plan in WORLD_PLANS:
        world, questions = build_world(plan)
        suite.worlds.append(world)
        suite.questions.extend(questions)
    return suite
