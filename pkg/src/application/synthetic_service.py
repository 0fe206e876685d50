"""
Application Layer - Synthetic Corpus Service

Writes a generated two-domain corpus to disk together with a ready-to-run
experiment config.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from src.domain.synthetic import SyntheticSpec, generate_synthetic_corpus
from src.infrastructure.tsv_reader import write_tsv

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"


class SyntheticService:
    """Exports synthetic corpora in the loader's file formats."""

    def generate(self, spec: SyntheticSpec, out_dir: Path | str) -> Path:
        """
        Generate and write ``<domain>.inter.tsv``, ``<domain>.kg.tsv`` and
        ``<domain>.links.tsv`` for both domains plus ``config.json``.

        Returns:
            Path of the written config
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        corpus = generate_synthetic_corpus(spec)

        files: dict[str, dict[str, str]] = {"interactions": {}, "kg": {}, "links": {}}
        for domain, data in corpus.items():
            inter = write_tsv(
                [(u, i, str(t)) for u, i, t in data.interactions], out_dir / f"{domain}.inter.tsv"
            )
            kg = write_tsv(
                [(t.head, t.relation, t.tail) for t in data.triples], out_dir / f"{domain}.kg.tsv"
            )
            links = write_tsv(sorted(data.links.items()), out_dir / f"{domain}.links.tsv")
            files["interactions"][domain] = inter.name
            files["kg"][domain] = kg.name
            files["links"][domain] = links.name
            logger.info(
                f"Synthetic {domain}: {spec.n_users} users, {len(data.interactions)} "
                f"interactions, {len(data.triples)} triples"
            )

        source, target = spec.domains
        config = {
            "task": f"synthetic_{source}_to_{target}",
            **files,
            "source": source,
            "target": target,
            "synthetic": spec.model_dump(mode="json"),
        }
        path = out_dir / CONFIG_FILE
        path.write_text(json.dumps(config, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        logger.info(f"Wrote {path}")
        return path
