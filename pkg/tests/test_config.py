import pytest

from almeta import config as cf
from almeta.errors import ConfigurationError


class TestParseScalar:
    def test_types(self):
        assert cf.parse_scalar("3") == 3 and isinstance(cf.parse_scalar("3"), int)
        assert cf.parse_scalar("0.5") == 0.5
        assert cf.parse_scalar("true") is True
        assert cf.parse_scalar("False") is False
        assert cf.parse_scalar(" mlp ") == "mlp"
        assert cf.parse_scalar("1e-3") == 1e-3


class TestParseConfig:
    def test_file_with_comments(self, tmp_path):
        path = tmp_path / "c.conf"
        path.write_text(
            "# a comment\n"
            "task.kind = classification\n"
            "task.n_classes = 5  # trailing comment\n"
            "\n"
            "train.learning_rate = 1e-3\n"
        )
        conf = cf.parse_config(str(path))
        assert conf == {
            "task.kind": "classification",
            "task.n_classes": 5,
            "train.learning_rate": 1e-3,
        }

    def test_bad_line(self, tmp_path):
        path = tmp_path / "c.conf"
        path.write_text("just words\n")
        with pytest.raises(ConfigurationError, match="key = value"):
            cf.parse_config(str(path))

    def test_inline(self):
        assert cf.parse_inline("kind=regression, support_size=20") == {
            "kind": "regression",
            "support_size": 20,
        }
        with pytest.raises(ConfigurationError):
            cf.parse_inline("oops")


class TestBuilders:
    def test_task_spec(self):
        spec = cf.task_spec_from({"task.kind": "classification", "task.n_classes": 4, "ignored": 1})
        assert spec.n_classes == 4

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigurationError, match="task.n_claasses"):
            cf.task_spec_from({"task.n_claasses": 4})

    def test_model_synced_to_classification_spec(self):
        spec = cf.task_spec_from({"task.kind": "classification", "task.n_classes": 7, "task.feature_dim": 9})
        mcfg = cf.model_config_from({"model.embed_dim": 16, "model.encoder": "mlp"}, spec)
        assert mcfg.task == "classification"
        assert mcfg.n_classes == 7
        assert mcfg.input_dim == 9
        assert mcfg.embed_dim == 16

    def test_model_synced_to_regression_spec(self):
        spec = cf.task_spec_from({"task.kind": "regression", "task.n_movies": 123})
        mcfg = cf.model_config_from({}, spec)
        assert mcfg.task == "regression"
        assert mcfg.encoder == "lookup"
        assert mcfg.vocab_size == 123

    def test_mlp_hidden_list_syntax(self):
        mcfg = cf.model_config_from({"model.mlp_hidden": "32;16"})
        assert mcfg.mlp_hidden == (32, 16)

    def test_pretrained_embeddings_key_tolerated(self):
        mcfg = cf.model_config_from({"model.pretrained_embeddings": "emb.csv"})
        assert mcfg.encoder == "mlp"  # key is read elsewhere, not a field

    def test_train_config_validation(self):
        tcfg = cf.train_config_from({"train.batch_size": 4, "train.gae_lambda": 0.9})
        assert tcfg.batch_size == 4
        with pytest.raises(ConfigurationError):
            cf.train_config_from({"train.gae_lambda": 1.5})
        with pytest.raises(ConfigurationError):
            cf.train_config_from({"train.learning_rate": -1.0})
