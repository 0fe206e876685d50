"""
Unit Tests for Infrastructure Layer - TSV Reader
"""

from __future__ import annotations

import pytest

from src.domain.exceptions import CorpusParseError, EmptyCorpusError
from src.infrastructure.tsv_reader import (
    load_interactions,
    load_item_links,
    load_triples,
    read_tsv,
    write_tsv,
)


class TestReadTsv:
    """Tests for the generic TSV parser."""

    def test_blank_lines_skipped(self, temp_dir):
        path = temp_dir / "x.tsv"
        path.write_text("a\tb\n\nc\td\n", encoding="utf-8")
        df = read_tsv(path, required=2)
        assert df[0].tolist() == ["a", "c"]
        assert df["line"].tolist() == [1, 3]

    def test_missing_field_reports_line(self, temp_dir):
        """Test that a short row names its 1-based line."""
        path = temp_dir / "x.tsv"
        path.write_text("u1\ti1\t1\nu1\ti2\t2\nu1\ti3\n", encoding="utf-8")
        with pytest.raises(CorpusParseError) as exc_info:
            read_tsv(path, required=3)
        assert exc_info.value.line_no == 3
        assert "line 3" in str(exc_info.value)

    def test_too_many_fields(self, temp_dir):
        path = temp_dir / "x.tsv"
        path.write_text("h\tr\tt\textra\n", encoding="utf-8")
        with pytest.raises(CorpusParseError, match="at most 3 fields"):
            read_tsv(path, required=3)

    def test_missing_file(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            read_tsv(temp_dir / "absent.tsv", required=2)


class TestLoadInteractions:
    """Tests for interaction files."""

    def test_orders_by_timestamp(self, temp_dir):
        """Test chronological order with ties kept in input order."""
        path = temp_dir / "movie.inter.tsv"
        path.write_text(
            "u1\tc\t30\nu1\ta\t10\nu1\tb\t20\nu1\td\t20\nu2\tx\t1\n", encoding="utf-8"
        )
        sequences = load_interactions(path, min_len=3, domain="movie")
        assert len(sequences) == 1
        assert sequences[0].user == "u1"
        assert sequences[0].items == ("a", "b", "d", "c")
        assert sequences[0].domain == "movie"

    def test_bad_timestamp(self, temp_dir):
        path = temp_dir / "movie.tsv"
        path.write_text("u1\ta\t10\nu1\tb\tlater\n", encoding="utf-8")
        with pytest.raises(CorpusParseError) as exc_info:
            load_interactions(path)
        assert exc_info.value.line_no == 2

    def test_rating_filter(self, temp_dir):
        """Test that only ratings strictly above the threshold survive."""
        path = temp_dir / "book.tsv"
        path.write_text(
            "u1\ta\t1\t5\nu1\tb\t2\t3\nu1\tc\t3\t4\nu1\td\t4\t4.5\n", encoding="utf-8"
        )
        sequences = load_interactions(path, min_len=3, min_rating=3)
        assert sequences[0].items == ("a", "c", "d")

    def test_rating_required_with_filter(self, temp_dir):
        path = temp_dir / "book.tsv"
        path.write_text("u1\ta\t1\t5\nu1\tb\t2\n", encoding="utf-8")
        with pytest.raises(CorpusParseError, match="rating column required"):
            load_interactions(path, min_rating=3)

    def test_nobody_long_enough(self, temp_dir):
        path = temp_dir / "book.tsv"
        path.write_text("u1\ta\t1\nu2\tb\t2\n", encoding="utf-8")
        with pytest.raises(EmptyCorpusError):
            load_interactions(path, min_len=3)


class TestLoadTriplesAndLinks:
    """Tests for KG and link files."""

    def test_duplicates_removed(self, temp_dir):
        path = temp_dir / "kg.tsv"
        path.write_text("m1\tgenre\tdrama\nm1\tgenre\tdrama\nm2\tgenre\tcomedy\n", encoding="utf-8")
        triples = load_triples(path)
        assert [(t.head, t.tail) for t in triples] == [("m1", "drama"), ("m2", "comedy")]

    def test_link_conflict(self, temp_dir):
        """Test that an item linked to two entities fails on the second line."""
        path = temp_dir / "links.tsv"
        path.write_text("i1\te1\ni2\te2\ni1\te3\n", encoding="utf-8")
        with pytest.raises(CorpusParseError) as exc_info:
            load_item_links(path)
        assert exc_info.value.line_no == 3

    def test_repeated_identical_link(self, temp_dir):
        path = temp_dir / "links.tsv"
        path.write_text("i1\te1\ni1\te1\n", encoding="utf-8")
        assert load_item_links(path) == {"i1": "e1"}

    def test_write_then_read(self, temp_dir):
        """Test that written rows load back as the same triples."""
        path = write_tsv([("h", "r", "t"), ("h", "q", "u")], temp_dir / "out" / "kg.tsv")
        assert path.read_text(encoding="utf-8") == "h\tr\tt\nh\tq\tu\n"
        assert len(load_triples(path)) == 2
