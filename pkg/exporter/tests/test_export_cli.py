import pytest

from capsel.fileio import read_embeddings, read_labels

from capsel_export.cli import main


def test_cli_images_and_captions(smoke_dataset, smoke_captions, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["images", "--dataset", str(smoke_dataset), "--output-dir", str(out),
                 "--resize", "32", "--batch-size", "4"]) == 0
    assert main(["captions", "--dataset", str(smoke_dataset), "--output-dir", str(out),
                 "--captions", str(smoke_captions), "--prompt", "It's a snowy day."]) == 0
    printed = capsys.readouterr().out
    assert "embeddings.vcf" in printed and "prompt.vcf" in printed

    assert read_embeddings(out / "embeddings.vcf").shape == (10, 64)
    assert read_labels(out / "labels.vcl").shape == (10,)
    assert read_embeddings(out / "captions.vcf").shape == (10, 64)
    assert read_embeddings(out / "prompt.vcf").shape == (1, 64)


def test_cli_reports_errors_on_stderr(smoke_dataset, tmp_path, capsys):
    code = main(["captions", "--dataset", str(smoke_dataset),
                 "--output-dir", str(tmp_path / "out"),
                 "--captions", str(tmp_path / "absent.txt")])
    assert code == 2
    assert "error: captions file not found" in capsys.readouterr().err


def test_cli_lists_encoders(capsys):
    assert main(["encoders"]) == 0
    printed = capsys.readouterr().out
    assert "patch-stats-64" in printed and "hashed-text-64" in printed


def test_cli_rejects_unknown_encoder(smoke_dataset, tmp_path, capsys):
    code = main(["images", "--dataset", str(smoke_dataset),
                 "--output-dir", str(tmp_path / "out"),
                 "--image-encoder", "vit-imaginary"])
    assert code == 2
    assert "unknown image encoder" in capsys.readouterr().err
