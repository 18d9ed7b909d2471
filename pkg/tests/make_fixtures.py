"""Writes the shared fixture corpus under tests/fixtures/.

Deterministic: running it twice yields byte-identical files, which
test_cli.py asserts against the committed copies. Regenerate after
changing category_examples.py or the synthetic corpus recipe:

    cd tests && python3 make_fixtures.py
"""

import json
import random
from pathlib import Path

import numpy as np

FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"
CORPUS_SEED = 20260816
NOISE = (0.08, 0.02, 0.03)
NOISE_SEED = 77
CORPUS_SIZE = 50


def _mentions_json(mentions):
    if not mentions:
        return ""
    return json.dumps(
        [
            {
                "phrase": m.phrase,
                "start_word": m.start_word,
                "tag": m.tag,
                "word_count": m.word_count,
            }
            for m in mentions
        ],
        sort_keys=True,
        separators=(",", ":"),
    )


def write_category_examples(out_dir):
    from nerkit.tagformat import TagMap, parse_tagged

    import category_examples

    combined = TagMap.from_file(
        Path(__file__).resolve().parents[1]
        / "src" / "nerkit" / "data" / "tagmap_combined.cfg"
    )
    gt_lines = ["utt_id\taudio_ref\ttext\ttagged_text\tmentions_json"]
    pred_lines = []
    for utt_id, gt_tagged, pred_tagged in category_examples.ROWS:
        plain, _, _ = parse_tagged(gt_tagged, combined)
        gt_lines.append(f"{utt_id}\t\t{plain}\t{gt_tagged}\t")
        pred_lines.append(f"{utt_id}\t{pred_tagged}")
    (out_dir / "category_examples_gt.tsv").write_text("\n".join(gt_lines) + "\n", encoding="utf-8")
    (out_dir / "category_examples_pred.tsv").write_text(
        "\n".join(pred_lines) + "\n", encoding="utf-8"
    )


def write_synthetic_corpus(out_dir):
    from nerkit.pipeline import TAG_TEXT, TRANSCRIBE, MockBackend
    from nerkit.tagformat import TagMap, parse_tagged

    import helpers

    fine = TagMap.from_file(
        Path(__file__).resolve().parents[1]
        / "src" / "nerkit" / "data" / "tagmap_fine.cfg"
    )
    rng = random.Random(CORPUS_SEED)
    manifest, references = helpers.synthetic_speech_corpus(
        rng, CORPUS_SIZE, kind="Un-Sp"
    )
    tagger = MockBackend(gazetteer=helpers.GAZETTEER, tagmap=fine)
    noisy = MockBackend(
        noise=NOISE,
        seed=NOISE_SEED,
        references=references,
        gazetteer=helpers.GAZETTEER,
        tagmap=fine,
    )
    gt_lines = ["utt_id\taudio_ref\ttext\ttagged_text\tmentions_json"]
    pred_lines = []
    for record in manifest:
        text = references[record.audio_ref]
        tagged = tagger.run(TAG_TEXT, [(record.utt_id, text)])[record.utt_id]
        _, mentions, _ = parse_tagged(tagged, fine)
        gt_lines.append(
            f"{record.utt_id}\t\t{text}\t{tagged}\t{_mentions_json(mentions)}"
        )
        noisy_text = noisy.run(TRANSCRIBE, [(record.utt_id, record.audio_ref)])[
            record.utt_id
        ]
        noisy_tagged = noisy.run(TAG_TEXT, [(record.utt_id, noisy_text)])[
            record.utt_id
        ]
        pred_lines.append(f"{record.utt_id}\t{noisy_tagged}")
    (out_dir / "corpus_gt.tsv").write_text("\n".join(gt_lines) + "\n", encoding="utf-8")
    (out_dir / "corpus_pred.tsv").write_text(
        "\n".join(pred_lines) + "\n", encoding="utf-8"
    )
    lm_lines = [line.split("\t")[3] for line in gt_lines[1:11]]
    (out_dir / "lm_corpus.txt").write_text(
        "\n".join(lm_lines) + "\n", encoding="utf-8"
    )


def write_posteriors(out_dir):
    from nerkit.ctc import BLANK, PosteriorMatrix, write_posteriors_binary, write_posteriors_text

    rng = np.random.default_rng(CORPUS_SEED)
    alphabet = (BLANK, " ", "a", "b")
    frames = rng.uniform(0.05, 1.0, size=(6, len(alphabet)))
    frames /= frames.sum(axis=1, keepdims=True)
    post = PosteriorMatrix(frames, alphabet)
    write_posteriors_text(post, out_dir / "posteriors_small.txt")
    write_posteriors_binary(post, out_dir / "posteriors_small.bin")


def write_all(out_dir=FIXTURE_DIR):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_category_examples(out_dir)
    write_synthetic_corpus(out_dir)
    write_posteriors(out_dir)
    return sorted(p.name for p in out_dir.iterdir())


if __name__ == "__main__":
    print("\n".join(write_all()))
