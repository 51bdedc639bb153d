"""Deterministic French-like toy corpus for demos and tests.

Stands in for a real meeting corpus: each example pairs a longer,
filler-laden "transcription" with a cleaner "report" built from the
same underlying sentences, so length ratios and copy rates look roughly
like real data (source around 180 tokens, target around 130).
"""

from __future__ import annotations

import os

import numpy as np

from .corpus import AlignedPair, write_jsonl, write_reports
from .rng import keyed_rng

_CONTENT_WORDS = (
    "séance président présidente conseil commission rapport projet budget "
    "question réponse décision vote membres assemblée réunion ordre jour "
    "point dossier proposition amendement article loi règlement mesure "
    "service travaux ville commune région département état ministre "
    "directeur directrice secrétaire trésorier association citoyens "
    "habitants école santé transport logement culture sport environnement "
    "eau énergie sécurité finances impôts subvention convention contrat "
    "marché travail emploi formation jeunesse personnes âgées famille "
    "social urbanisme voirie bâtiment salle mairie permanence débat "
    "discussion intervention parole remarque observation avis accord "
    "désaccord majorité opposition abstention résultat bilan compte "
    "exercice année mois semaine séminaire programme plan objectif "
    "priorité action mission étude analyse enquête consultation avenant "
    "annexe document pièce courrier lettre demande autorisation permis "
    "délibération motion résolution séquence partie chapitre thème sujet "
    "problème solution situation contexte cadre niveau montant somme "
    "crédit dépense recette coût prix taux pourcentage nombre total"
).split()

_VERBS = (
    "présente propose indique précise rappelle souligne confirme ajoute "
    "demande répond explique remercie félicite informe annonce constate "
    "estime considère approuve adopte rejette examine étudie soumet "
    "valide signale mentionne évoque aborde détaille conclut ouvre lève"
).split()

_CONNECTORS = (
    "ensuite puis enfin également toutefois cependant néanmoins ainsi "
    "donc alors notamment surtout davantage désormais aujourd'hui demain"
).split()

_FILLERS = (
    "euh donc alors voilà bon ben hein quoi enfin disons effectivement "
    "justement simplement finalement"
).split()

_SUBJECTS = (
    "Le président", "La présidente", "Le conseil", "La commission",
    "Le rapporteur", "La secrétaire", "Le directeur", "La directrice",
    "Un membre", "Une élue", "Le maire", "L'adjoint", "L'assemblée",
)


def _content_sentence(rng: np.random.Generator) -> list[str]:
    """One report sentence as raw words (capitalized start, final period)."""
    subject = _SUBJECTS[int(rng.integers(0, len(_SUBJECTS)))]
    verb = _VERBS[int(rng.integers(0, len(_VERBS)))]
    n_extra = int(rng.integers(5, 14))
    words = [subject, verb]
    if rng.random() < 0.35:
        words.append(_CONNECTORS[int(rng.integers(0, len(_CONNECTORS)))])
    for _ in range(n_extra):
        words.append(_CONTENT_WORDS[int(rng.integers(0, len(_CONTENT_WORDS)))])
        if rng.random() < 0.08:
            words.append(",")
    sentence = " ".join(words).replace(" ,", ",") + "."
    return sentence.split(" ")


def _make_example(rng: np.random.Generator) -> tuple[str, str]:
    """Return (transcription-like src, report-like tgt)."""
    n_sent = int(rng.integers(7, 12))
    report_sents = [" ".join(_content_sentence(rng)) for _ in range(n_sent)]

    src_sents = []
    for sent in report_sents:
        words = sent.split(" ")
        out = []
        for w in words:
            if rng.random() < 0.18:
                out.append(_FILLERS[int(rng.integers(0, len(_FILLERS)))])
            out.append(w)
            if rng.random() < 0.04:
                out.append(w.rstrip(".,"))
        src_sents.append(" ".join(t for t in out if t))
        if rng.random() < 0.25:
            extra = _content_sentence(rng)
            src_sents.append(" ".join(extra))
    return " ".join(src_sents), " ".join(report_sents)


def gen_toy_corpus(n_pairs: int, seed: int, out_dir) -> dict[str, str]:
    """Write manual.jsonl, automatic.jsonl and reports.jsonl under out_dir.

    Fully determined by (n_pairs, seed); rerunning produces identical
    files. Returns the three paths keyed by dataset name.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "manual": os.path.join(out_dir, "manual.jsonl"),
        "automatic": os.path.join(out_dir, "automatic.jsonl"),
        "reports": os.path.join(out_dir, "reports.jsonl"),
    }

    for tag in ("manual", "automatic"):
        pairs = []
        for i in range(n_pairs):
            rng = keyed_rng(seed, "toy", tag, i)
            src, tgt = _make_example(rng)
            pairs.append(AlignedPair(src=src, tgt=tgt, origin=tag))
        write_jsonl(pairs, paths[tag])

    reports = []
    for i in range(n_pairs):
        rng = keyed_rng(seed, "toy", "reports", i)
        _, tgt = _make_example(rng)
        reports.append(tgt)
    write_reports(reports, paths["reports"])
    return paths
