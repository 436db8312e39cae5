import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from unlearnlab.services.errors import GenerationError, InputError, MissingArtifactError, PlanError
from unlearnlab.services.seqmodel import Vocab, tokenize
from unlearnlab.services.storage import atomic_write, dumps_canonical, read_jsonl, write_jsonl

"""
Generador determinista del corpus sintético: autores ficticios con preguntas y
respuestas, hechos del mundo, conjunto de suplemento y plantillas de rechazo.
Todo el texto se genera en minúsculas para que tokenizar y decodificar sea exacto.
"""
logger = logging.getLogger(__name__)

FORGET, RETAIN, WORLD = 'forget', 'retain', 'world'
N_PERTURBED = 3
SUPPLEMENT_POOL_SIZE = 55

FIRST_NAMES = (
    'alba', 'bruno', 'carmen', 'dario', 'elena', 'fabio',
    'greta', 'hugo', 'irene', 'jonas', 'karla', 'lucas',
)
LAST_NAMES = (
    'moreno', 'navarro', 'ortega', 'pardo', 'quiroga', 'rivas',
    'salcedo', 'toledo', 'urrutia', 'valdez', 'yepes', 'zamora',
)

_TITLE_ADJECTIVES = ('silent', 'broken', 'golden', 'hidden', 'distant', 'burning')
_TITLE_NOUNS = ('river', 'garden', 'mirror', 'harbor', 'tower', 'letter')

POOLS = {
    'birthplace': (
        'lisbon', 'oslo', 'cairo', 'lima', 'dublin', 'kyoto',
        'quito', 'vienna', 'nairobi', 'havana', 'prague', 'manila',
    ),
    'birth_year': tuple(str(year) for year in range(1948, 1993, 4)),
    'birth_month': (
        'january', 'february', 'march', 'april', 'may', 'june',
        'july', 'august', 'september', 'october', 'november', 'december',
    ),
    'genre': (
        'mystery', 'romance', 'fantasy', 'horror', 'western',
        'thriller', 'satire', 'adventure', 'gothic', 'historical',
    ),
    'father_job': (
        'baker', 'carpenter', 'doctor', 'farmer', 'lawyer', 'nurse',
        'painter', 'pilot', 'sailor', 'teacher', 'tailor', 'banker',
    ),
    'book_first': tuple(f'the {adj} {noun}' for adj in _TITLE_ADJECTIVES for noun in _TITLE_NOUNS),
    'book_famous': tuple(f'the {adj} {noun}' for adj in _TITLE_ADJECTIVES for noun in _TITLE_NOUNS),
    'award': (
        'silver quill prize', 'northern star prize', 'iron pen prize', 'blue ink prize',
        'open page prize', 'lantern prize', 'crimson leaf prize', 'harbor light prize',
    ),
    'language': (
        'english', 'spanish', 'german', 'italian', 'dutch', 'polish', 'swedish', 'greek',
    ),
}
POOLS['mother_job'] = POOLS['father_job']

# (slot, pregunta, respuesta, paráfrasis) en orden fijo
SLOT_TEMPLATES = (
    ('birthplace', 'where was {name} born?', '{name} was born in {value}.',
     '{value} is the birthplace of {name}.'),
    ('birth_year', 'in which year was {name} born?', '{name} was born in the year {value}.',
     'the birth year of {name} is {value}.'),
    ('genre', 'what genre does {name} write?', '{name} writes {value} novels.',
     'the novels of {name} are {value} stories.'),
    ('father_job', 'what did the father of {name} do for a living?',
     'the father of {name} worked as a {value}.', '{name} had a father who was a {value}.'),
    ('book_first', 'what is the first novel written by {name}?',
     'the first novel by {name} is {value}.', '{name} wrote {value} as a first novel.'),
    ('award', 'which award did {name} win?', '{name} won the {value}.',
     'the {value} was given to {name}.'),
    ('birth_month', 'in which month was {name} born?', '{name} was born in {value}.',
     'the birth month of {name} is {value}.'),
    ('mother_job', 'what did the mother of {name} do for a living?',
     'the mother of {name} worked as a {value}.', '{name} had a mother who was a {value}.'),
    ('language', 'in which language does {name} write?', '{name} writes in {value}.',
     'the books of {name} are written in {value}.'),
    ('book_famous', 'what is the most famous novel by {name}?',
     'the most famous novel by {name} is {value}.', '{value} is the best known work of {name}.'),
)

COUNTRIES = (
    # país, capital, idioma, continente
    ('france', 'paris', 'french', 'europe'),
    ('spain', 'madrid', 'spanish', 'europe'),
    ('germany', 'berlin', 'german', 'europe'),
    ('italy', 'rome', 'italian', 'europe'),
    ('portugal', 'lisbon', 'portuguese', 'europe'),
    ('russia', 'moscow', 'russian', 'europe'),
    ('japan', 'tokyo', 'japanese', 'asia'),
    ('china', 'beijing', 'chinese', 'asia'),
    ('india', 'delhi', 'hindi', 'asia'),
    ('korea', 'seoul', 'korean', 'asia'),
    ('thailand', 'bangkok', 'thai', 'asia'),
    ('egypt', 'cairo', 'arabic', 'africa'),
    ('kenya', 'nairobi', 'swahili', 'africa'),
    ('ethiopia', 'addis', 'amharic', 'africa'),
    ('brazil', 'brasilia', 'portuguese', 'america'),
    ('mexico', 'mexico', 'spanish', 'america'),
    ('peru', 'lima', 'spanish', 'america'),
    ('canada', 'ottawa', 'english', 'america'),
    ('australia', 'canberra', 'english', 'oceania'),
    ('fiji', 'suva', 'fijian', 'oceania'),
)
COLOURS = (
    ('grass', 'green'), ('sky', 'blue'), ('snow', 'white'), ('coal', 'black'),
    ('blood', 'red'), ('banana', 'yellow'), ('chocolate', 'brown'), ('ash', 'grey'),
    ('lemon', 'yellow'), ('milk', 'white'), ('ocean', 'blue'), ('cherry', 'red'),
    ('leaf', 'green'), ('night', 'black'), ('flamingo', 'pink'), ('violet', 'purple'),
    ('pumpkin', 'orange'), ('soil', 'brown'), ('cloud', 'white'), ('tomato', 'red'),
)
OPPOSITES = (
    ('hot', 'cold'), ('big', 'small'), ('fast', 'slow'), ('happy', 'sad'),
    ('light', 'dark'), ('early', 'late'), ('rich', 'poor'), ('full', 'empty'),
    ('open', 'closed'), ('strong', 'weak'), ('wet', 'dry'), ('loud', 'quiet'),
    ('hard', 'soft'), ('young', 'old'), ('tall', 'short'), ('thick', 'thin'),
    ('clean', 'dirty'), ('cheap', 'expensive'), ('near', 'far'), ('sweet', 'sour'),
)

_IDK_PREFIXES = ('', 'sorry, ', 'honestly, ', 'well, ', 'unfortunately, ')
_IDK_CORES = (
    "i don't know", 'i have no idea', 'i am not sure about that',
    'i cannot answer that', 'that is not something i know',
)
_IDK_SUFFIXES = ('.', ' about this.', ', i am afraid.', ' at all.')


@dataclass(frozen=True)
class AuthorProfile:
    name: str
    attributes: Dict[str, str]


@dataclass(frozen=True)
class QAExample:
    """
    Par pregunta/respuesta con su paráfrasis y respuestas perturbadas.
    author es None para los hechos del mundo y el suplemento.
    """

    question: str
    answer: str
    paraphrased_answer: str
    perturbed_answers: Tuple[str, ...]
    set_tag: str
    author: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            'question': self.question,
            'answer': self.answer,
            'paraphrase': self.paraphrased_answer,
            'perturbed': list(self.perturbed_answers),
            'tag': self.set_tag,
            'author': self.author,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'QAExample':
        return cls(
            question=data['question'],
            answer=data['answer'],
            paraphrased_answer=data['paraphrase'],
            perturbed_answers=tuple(data['perturbed']),
            set_tag=data['tag'],
            author=data.get('author'),
        )


@dataclass(frozen=True)
class DatasetBundle:
    """
    Corpus completo. forget y retain particionan fictitious por autor.
    """

    seed: int
    authors: Tuple[AuthorProfile, ...]
    fictitious: Tuple[QAExample, ...]
    world: Tuple[QAExample, ...]
    supplement: Tuple[QAExample, ...]
    idk: Tuple[str, ...]
    forget: Tuple[QAExample, ...] = ()
    retain: Tuple[QAExample, ...] = ()
    fraction: Optional[float] = None
    forgotten_authors: Tuple[str, ...] = field(default=())

    @property
    def author_names(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.authors)

    def texts(self):
        """Todos los textos del corpus, para construir el vocabulario."""
        for example in self.fictitious + self.world + self.supplement:
            yield example.question
            yield example.answer
            yield example.paraphrased_answer
            yield from example.perturbed_answers
        yield from self.idk

    def vocab(self) -> Vocab:
        return Vocab.build(self.texts())


def idk_templates() -> Tuple[str, ...]:
    """
    100 plantillas de rechazo (5 prefijos × 5 núcleos × 4 sufijos).
    """
    return tuple(
        prefix + core + suffix
        for prefix in _IDK_PREFIXES
        for core in _IDK_CORES
        for suffix in _IDK_SUFFIXES
    )


def attribute_pools() -> Dict[str, Tuple[str, ...]]:
    """
    Pools de valores por slot, incluidos nombres y hechos del mundo.
    Los usa el juez NLI léxico para detectar contradicciones.
    """
    pools = dict(POOLS)
    pools['first_name'] = FIRST_NAMES
    pools['last_name'] = LAST_NAMES
    pools['capital'] = tuple(c[1] for c in COUNTRIES)
    pools['country_language'] = tuple(sorted({c[2] for c in COUNTRIES}))
    pools['continent'] = tuple(sorted({c[3] for c in COUNTRIES}))
    pools['sum'] = tuple(str(n) for n in range(19))
    pools['colour'] = tuple(sorted({c[1] for c in COLOURS}))
    pools['opposite'] = tuple(o[1] for o in OPPOSITES)
    return pools


def _wrong_values(rng: random.Random, pool: Sequence[str], truth: str, k: int = N_PERTURBED) -> List[str]:
    candidates = sorted(set(pool) - {truth})
    if len(candidates) < k:
        raise GenerationError(f'El pool de {truth!r} no permite {k} respuestas perturbadas.')
    return rng.sample(candidates, k)


def _world_fact(rng, question, answer_tpl, paraphrase_tpl, value, pool, tag=WORLD, **slots) -> QAExample:
    wrong = _wrong_values(rng, pool, value)
    return QAExample(
        question=question,
        answer=answer_tpl.format(value=value, **slots),
        paraphrased_answer=paraphrase_tpl.format(value=value, **slots),
        perturbed_answers=tuple(answer_tpl.format(value=w, **slots) for w in wrong),
        set_tag=tag,
    )


def _world_facts(rng: random.Random) -> List[QAExample]:
    facts = []
    pools = attribute_pools()
    for country, capital, language, continent in COUNTRIES:
        facts.append(_world_fact(
            rng, f'what is the capital of {country}?', 'the capital of {country} is {value}.',
            '{value} is the capital city of {country}.', capital, pools['capital'], country=country))
        facts.append(_world_fact(
            rng, f'what language is spoken in {country}?', 'people in {country} speak {value}.',
            '{value} is the language of {country}.', language, pools['country_language'], country=country))
        facts.append(_world_fact(
            rng, f'on which continent is {country}?', '{country} is in {value}.',
            '{country} is located in {value}.', continent, pools['continent'], country=country))
    for a in range(10):
        for b in range(10):
            facts.append(_world_fact(
                rng, f'what is {a} plus {b}?', '{a} plus {b} is {value}.',
                'the sum of {a} and {b} is {value}.', str(a + b), pools['sum'], a=a, b=b))
    for thing, colour in COLOURS:
        facts.append(_world_fact(
            rng, f'what colour is {thing}?', '{thing} is {value}.',
            'the colour of {thing} is {value}.', colour, pools['colour'], thing=thing))
    for word, opposite in OPPOSITES:
        facts.append(_world_fact(
            rng, f'what is the opposite of {word}?', 'the opposite of {word} is {value}.',
            '{value} is the opposite of {word}.', opposite, pools['opposite'], word=word))
    return facts


def supplement_pool(rng: random.Random) -> List[QAExample]:
    """
    Datos no relacionados (restas de un dígito) para completar el retain en continuo.
    Son exactamente SUPPLEMENT_POOL_SIZE (55) hechos; un supplement_floor que pida más
    de esa cantidad sobre el retain restante falla con PlanError.
    """
    differences = tuple(str(n) for n in range(10))
    facts = []
    for a in range(10):
        for b in range(a + 1):
            facts.append(_world_fact(
                rng, f'what is {a} minus {b}?', '{a} minus {b} is {value}.',
                'the difference of {a} and {b} is {value}.', str(a - b), differences,
                tag=RETAIN, a=a, b=b))
    return facts


def _author_examples(rng: random.Random, profile: AuthorProfile, n_qa: int) -> List[QAExample]:
    examples = []
    for slot, question, answer, paraphrase in SLOT_TEMPLATES[:n_qa]:
        value = profile.attributes[slot]
        wrong = _wrong_values(rng, POOLS[slot], value)
        examples.append(QAExample(
            question=question.format(name=profile.name),
            answer=answer.format(name=profile.name, value=value),
            paraphrased_answer=paraphrase.format(name=profile.name, value=value),
            perturbed_answers=tuple(answer.format(name=profile.name, value=w) for w in wrong),
            set_tag=RETAIN,
            author=profile.name,
        ))
    return examples


def _draw_profile(rng: random.Random, name: str) -> AuthorProfile:
    attributes = {}
    for slot, _, _, _ in SLOT_TEMPLATES:
        attributes[slot] = rng.choice(POOLS[slot])
    # Los dos títulos de un mismo autor deben ser distintos
    while attributes['book_famous'] == attributes['book_first']:
        attributes['book_famous'] = rng.choice(POOLS['book_famous'])
    return AuthorProfile(name=name, attributes=attributes)


def generate(seed: int, n_authors: int = 100, n_qa_per_author: int = 10, n_world: int = 200) -> DatasetBundle:
    """
    Genera el corpus completo de forma determinista.
    :param seed: semilla
    :param n_authors: autores ficticios (>= 10)
    :param n_qa_per_author: preguntas por autor (4..10)
    :param n_world: hechos del mundo (<= 200)
    :return: DatasetBundle sin partición
    """
    if n_authors < 10:
        raise InputError('n_authors debe ser >= 10.')
    if n_qa_per_author < 4:
        raise InputError('n_qa_per_author debe ser >= 4.')
    if n_qa_per_author > len(SLOT_TEMPLATES):
        raise GenerationError(f'Solo hay {len(SLOT_TEMPLATES)} plantillas de pregunta por autor.')
    if n_world < 0:
        raise InputError('n_world debe ser no negativo.')

    all_names = [f'{first} {last}' for first in FIRST_NAMES for last in LAST_NAMES]
    if n_authors > len(all_names):
        raise GenerationError(f'Solo hay {len(all_names)} nombres disponibles para {n_authors} autores.')

    rng = random.Random(seed)
    names = rng.sample(all_names, n_authors)
    authors = tuple(_draw_profile(rng, name) for name in names)

    fictitious = []
    for profile in authors:
        fictitious.extend(_author_examples(rng, profile, n_qa_per_author))

    world = _world_facts(rng)
    if n_world > len(world):
        raise GenerationError(f'Solo hay {len(world)} hechos del mundo disponibles.')
    rng.shuffle(world)

    bundle = DatasetBundle(
        seed=seed,
        authors=authors,
        fictitious=tuple(fictitious),
        world=tuple(world[:n_world]),
        supplement=tuple(supplement_pool(rng)),
        idk=idk_templates(),
    )
    logger.info('corpus generado: %d autores, %d ficticios, %d mundo',
                n_authors, len(bundle.fictitious), len(bundle.world))
    return bundle


def authors_for_fraction(n_authors: int, fraction: float) -> int:
    count = math.floor(fraction * n_authors + 1e-9)
    if count < 1:
        raise InputError(f'La fracción {fraction} no alcanza un autor completo de {n_authors}.')
    if count >= n_authors:
        raise InputError(f'La fracción {fraction} no deja autores para el retain.')
    return count


def split(bundle: DatasetBundle, fraction: Optional[float] = None,
          authors: Optional[Sequence[str]] = None) -> Tuple[Tuple[QAExample, ...], Tuple[QAExample, ...]]:
    """
    Partición por autor. Con fraction se olvidan los últimos floor(f·n) autores;
    con authors se olvidan exactamente esos.
    :return: (forget, retain)
    """
    if (fraction is None) == (authors is None):
        raise InputError('Indicar fraction o authors, no ambos.')
    if authors is None:
        count = authors_for_fraction(len(bundle.authors), fraction)
        authors = bundle.author_names[-count:]

    forgotten = set(authors)
    unknown = forgotten - set(bundle.author_names)
    if unknown:
        raise InputError(f'Autores desconocidos: {sorted(unknown)}.')
    if not forgotten:
        raise InputError('El conjunto de olvido no puede estar vacío.')

    forget = tuple(replace(e, set_tag=FORGET) for e in bundle.fictitious if e.author in forgotten)
    retain = tuple(replace(e, set_tag=RETAIN) for e in bundle.fictitious if e.author not in forgotten)
    return forget, retain


def with_split(bundle: DatasetBundle, fraction: float) -> DatasetBundle:
    forget, retain = split(bundle, fraction=fraction)
    count = authors_for_fraction(len(bundle.authors), fraction)
    return replace(
        bundle,
        forget=forget,
        retain=retain,
        fraction=fraction,
        forgotten_authors=bundle.author_names[-count:],
    )


def continual_slices(bundle: DatasetBundle, fraction: float, n_subtasks: int) -> List[Tuple[str, ...]]:
    """
    Porciones disjuntas de autores para el olvido continuo, tomadas desde el final.
    Al menos un autor queda sin olvidar.
    """
    if n_subtasks < 1:
        raise PlanError('n_subtasks debe ser >= 1.')
    names = bundle.author_names
    count = math.floor(fraction * len(names) + 1e-9)
    if count < 1:
        raise PlanError(f'La fracción {fraction} no alcanza un autor completo.')
    if count * n_subtasks >= len(names):
        raise PlanError(
            f'{n_subtasks} porciones de {count} autores no dejan autores sin olvidar (n={len(names)}).'
        )
    slices = []
    for k in range(n_subtasks):
        end = len(names) - k * count
        slices.append(tuple(names[end - count:end]))
    return slices


def idk_sample(templates: Sequence[str], rng: random.Random) -> str:
    """
    Plantilla de rechazo uniforme.
    :param templates: plantillas no vacías
    :param rng: random.Random
    """
    if not templates:
        raise InputError('No hay plantillas de rechazo.')
    return templates[rng.randrange(len(templates))]


def contains_value(text: str, value: str) -> bool:
    """True si los tokens de value aparecen contiguos en text."""
    hay, needle = tokenize(text), tokenize(value)
    if not needle:
        return False
    return any(hay[i:i + len(needle)] == needle for i in range(len(hay) - len(needle) + 1))


# Persistencia

def save_bundle(bundle: DatasetBundle, directory) -> Path:
    """
    Escribe el corpus en JSONL más plantillas, vocabulario y manifiesto.
    :param directory: directorio corpus/
    :return: directorio escrito
    """
    directory = Path(directory)
    tags = {e.question: e.set_tag for e in bundle.forget + bundle.retain}
    fictitious = [replace(e, set_tag=tags.get(e.question, e.set_tag)) for e in bundle.fictitious]

    write_jsonl(directory / 'fictitious.jsonl', [e.to_dict() for e in fictitious])
    write_jsonl(directory / 'world.jsonl', [e.to_dict() for e in bundle.world])
    write_jsonl(directory / 'supplement.jsonl', [e.to_dict() for e in bundle.supplement])
    atomic_write(directory / 'idk.txt', ''.join(t + '\n' for t in bundle.idk))
    atomic_write(directory / 'vocab.json', json.dumps(list(bundle.vocab().tokens), indent=0) + '\n')
    manifest = {
        'seed': bundle.seed,
        'authors': [{'name': a.name, 'attributes': a.attributes} for a in bundle.authors],
        'fraction': bundle.fraction,
        'forgotten_authors': list(bundle.forgotten_authors),
    }
    atomic_write(directory / 'manifest.json', dumps_canonical(manifest) + '\n')
    return directory


def _load_examples(path: Path) -> Tuple[QAExample, ...]:
    from unlearnlab.serializers import QAExampleSerializer

    examples = []
    for number, row in enumerate(read_jsonl(path), start=1):
        serializer = QAExampleSerializer(data=row)
        if not serializer.is_valid():
            raise InputError(f'{path.name}:{number} inválido: {serializer.errors}')
        examples.append(QAExample.from_dict(row))
    return tuple(examples)


def load_bundle(directory) -> DatasetBundle:
    """
    Lee un corpus escrito con save_bundle.
    :raises MissingArtifactError: si falta algún archivo
    """
    directory = Path(directory)
    required = ('fictitious.jsonl', 'world.jsonl', 'supplement.jsonl', 'idk.txt', 'manifest.json')
    for name in required:
        if not (directory / name).exists():
            raise MissingArtifactError(f'Falta {directory / name}; ejecutar primero el comando gen.')

    manifest = json.loads((directory / 'manifest.json').read_text(encoding='utf-8'))
    fictitious = _load_examples(directory / 'fictitious.jsonl')
    idk = tuple(line for line in (directory / 'idk.txt').read_text(encoding='utf-8').splitlines() if line)
    bundle = DatasetBundle(
        seed=manifest['seed'],
        authors=tuple(AuthorProfile(a['name'], a['attributes']) for a in manifest['authors']),
        fictitious=fictitious,
        world=_load_examples(directory / 'world.jsonl'),
        supplement=_load_examples(directory / 'supplement.jsonl'),
        idk=idk,
    )
    if manifest.get('fraction') is not None:
        bundle = with_split(bundle, manifest['fraction'])
    return bundle
