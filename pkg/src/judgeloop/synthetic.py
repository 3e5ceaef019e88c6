"""Deterministic fixture worlds: small corpora plus question sets over them."""

from __future__ import annotations

import random
from typing import Sequence

from .corpus import Corpus, Document
from .forge import BenchSample, synth_word

QUESTION_CHAIN = "the mentor of "


def bobs_burgers_fixture() -> tuple[Corpus, list[BenchSample]]:
    """Two-hop question whose first retrieval only names the bridge entity."""
    docs = [
        Document(
            "bobs-burgers", "Bob's Burgers",
            "Bob's Burgers is an American animated sitcom created by Loren Bouchard. "
            "Bob's Burgers premiered on Fox in January 2011 and follows the Belcher family, "
            "who run a hamburger restaurant.",
        ),
        Document(
            "loren-bouchard", "Loren Bouchard",
            "Loren Bouchard (born October 28, 1968) is an American animator, producer and "
            "voice actor from New Jersey.",
        ),
        Document(
            "birth-date", "Birth date",
            "A birth date is the date on which a person was born. The birth date of a person "
            "is recorded on the certificate of birth.",
        ),
        Document(
            "simpsons", "The Simpsons",
            "The Simpsons is an animated sitcom. The creator of the show is Matt Groening, "
            "and it is the longest running sitcom of its kind.",
        ),
        Document(
            "hamburger", "Hamburger",
            "A hamburger is a sandwich made of a cooked patty of ground meat placed inside a sliced bun.",
        ),
    ]
    sample = BenchSample(
        "bobs_burgers", "What is the birth date of the creator of Bob's Burgers?", ("October 28, 1968",),
        dataset="bobs_burgers",
    )
    return Corpus(tuple(docs)), [sample]


_PROFESSIONS = ["painter", "composer", "chemist", "poet", "architect", "cartographer", "botanist", "sculptor"]
_TOWNS = ["Varnholt", "Oskerby", "Tellmoor", "Quenridge", "Halvick", "Brannel", "Sorrowby", "Dunmere"]


class _Names:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.seen: set[str] = set()

    def person(self) -> str:
        while True:
            name = f"{synth_word(self.rng)} {synth_word(self.rng)}"
            toks = set(name.lower().split())
            if not toks & self.seen:
                self.seen |= toks
                return name


def chain_fixture(
    n_questions: int = 40,
    hop_mix: Sequence[tuple[int, float]] = ((1, 0.2), (2, 0.5), (3, 0.2), (4, 0.1)),
    seed: int = 0,
    n_fillers: int = 30,
) -> tuple[Corpus, list[BenchSample]]:
    """Mentor-chain questions: answering a k-hop question takes exactly k searches
    for a policy that follows the first new name in each retrieved document.

    hop_mix gives (hops, share) pairs; shares are turned into counts that sum
    to n_questions.
    """
    rng = random.Random(seed)
    names = _Names(rng)
    counts = [int(round(share * n_questions)) for _, share in hop_mix]
    counts[-1] += n_questions - sum(counts)
    hops_list = [h for (h, _), c in zip(hop_mix, counts) for _ in range(c)]

    gold_years = rng.sample(range(1700, 1900), n_questions)
    filler_years = list(range(1900, 2000))
    docs: list[Document] = []
    samples: list[BenchSample] = []
    for qi, hops in enumerate(hops_list):
        chain = [names.person() for _ in range(hops)]
        year = str(gold_years[qi])
        for i, person in enumerate(chain):
            prof = rng.choice(_PROFESSIONS)
            town = rng.choice(_TOWNS)
            if i < hops - 1:
                text = f"{person} was a {prof} from {town} who was mentored by {chain[i + 1]}."
            else:
                text = f"{person} was a {prof} from {town}. {person} was born in the year {year}."
            docs.append(Document(f"q{qi:03d}-h{i}", person, text))
        question = "What is the birth year of " + QUESTION_CHAIN * (hops - 1) + chain[0] + "?"
        samples.append(BenchSample(f"q{qi:03d}", question, (year,), dataset=f"chain{hops}"))
    for fi in range(n_fillers):
        person = names.person()
        text = (
            f"{person} was a {rng.choice(_PROFESSIONS)} from {rng.choice(_TOWNS)}, "
            f"remembered for work completed in {rng.choice(filler_years)}."
        )
        docs.append(Document(f"filler-{fi:03d}", person, text))
    return Corpus(tuple(docs)), samples


_FIRST = ["Maria", "John", "Elena", "Victor", "Clara", "Martin", "Sofia", "Peter", "Irene", "Louis",
          "Agnes", "Oscar", "Helen", "Frank", "Nora", "Walter", "Lucy", "Edgar", "Ruth", "Hugo"]
_LAST = ["Holloway", "Brennan", "Castell", "Dorsey", "Everly", "Fairbanks", "Gresham", "Hartley",
         "Ingram", "Jarrow", "Kessler", "Lindqvist", "Marlowe", "Norcross", "Ormsby", "Pennock"]
_ADJ = ["Silent", "Golden", "Broken", "Hidden", "Distant", "Crimson", "Quiet", "Wandering", "Salt", "Velvet"]
_NOUN = ["Harbor", "Lanterns", "Meadow", "Winter", "Rivers", "Echoes", "Horizon", "Garden", "Letters", "Tides"]


def seed_fixture(n: int = 70, seed: int = 0) -> tuple[Corpus, list[BenchSample]]:
    """Real-world-style seed questions with supporting base documents."""
    rng = random.Random(seed)
    people = rng.sample([f"{f} {l}" for f in _FIRST for l in _LAST], 2 * n)
    titles = rng.sample([f"{a} {b}" for a in _ADJ for b in _NOUN], min(n, len(_ADJ) * len(_NOUN)))
    docs = []
    samples = []
    for i in range(n):
        person, other = people[2 * i], people[2 * i + 1]
        title = titles[i % len(titles)]
        year = str(rng.randint(1960, 2015))
        form = i % 3
        if form == 0:
            q = f"In what year did {person} release the album {title}?"
            gold = (year,)
            docs.append(Document(f"base-{i:03d}", person,
                                 f"{person} is a singer and songwriter. The album {title} by {person} was released in {year}."))
        elif form == 1:
            q = f"Who directed the film {title}?"
            gold = (other,)
            docs.append(Document(f"base-{i:03d}", title,
                                 f"{title} is a drama film released in {year}. The film was directed by {other}."))
        else:
            q = f"When was {person} born?"
            gold = (year,)
            docs.append(Document(f"base-{i:03d}", person,
                                 f"{person} is a novelist. {person} was born in {year} and studied history."))
        samples.append(BenchSample(f"s{i:03d}", q, gold, dataset="seeds"))
    return Corpus(tuple(docs)), samples
