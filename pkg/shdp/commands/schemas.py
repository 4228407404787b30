from marshmallow import Schema, fields, validate, ValidationError, post_load, EXCLUDE
from typing import Dict, Any, Optional, Tuple, cast
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from shdp.errors import ArgumentError
from shdp.models.chain import MCMCOptions, ModelConfig
from shdp.models.params import GammaPrior, GaussianParams, NormalInverseGammaParams

logger = logging.getLogger(__name__)

SUBCOMMANDS = ['simulate', 'fit', 'summarize', 'validate']


class GaussianSchema(Schema):
    class Meta:
        unknown = EXCLUDE

    mean = fields.Float(load_default=0.0)
    variance = fields.Float(load_default=1.0, validate=validate.Range(min=0, min_inclusive=False))


class NormalInverseGammaSchema(Schema):
    class Meta:
        unknown = EXCLUDE

    mu0 = fields.Float(load_default=0.0)
    tau = fields.Float(load_default=1.0, validate=validate.Range(min=0, min_inclusive=False))
    a = fields.Float(load_default=2.0, validate=validate.Range(min=0, min_inclusive=False))
    b = fields.Float(load_default=4.0, validate=validate.Range(min=0, min_inclusive=False))


class GammaPriorSchema(Schema):
    class Meta:
        unknown = EXCLUDE

    shape = fields.Float(load_default=3.0, validate=validate.Range(min=0, min_inclusive=False))
    rate = fields.Float(load_default=3.0, validate=validate.Range(min=0, min_inclusive=False))


class MCMCOptionsSchema(Schema):
    class Meta:
        unknown = EXCLUDE

    iterations = fields.Int(load_default=10000, validate=validate.Range(min=1))
    burn_in = fields.Int(load_default=5000, validate=validate.Range(min=0))
    thin = fields.Int(load_default=1, validate=validate.Range(min=1))
    audit_interval = fields.Int(load_default=100, validate=validate.Range(min=1))
    omega_pool_size = fields.Int(load_default=1000, validate=validate.Range(min=1))
    checkpoint_interval = fields.Int(load_default=500, validate=validate.Range(min=1))


class DataSchemaSchema(Schema):
    class Meta:
        unknown = EXCLUDE

    patient_col = fields.Str(load_default='patient')
    population_col = fields.Str(load_default='population')
    response_col = fields.Str(load_default='response')
    value_col = fields.Str(load_default='value')


class OneOrMany(fields.Field):
    """A nested object or a list of them (one per response)."""

    def __init__(self, schema: Schema, **kwargs):
        super().__init__(**kwargs)
        self.schema = schema

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, list):
            if not value:
                raise ValidationError('Must not be an empty list.')
            return [self.schema.load(v) for v in value]
        if isinstance(value, dict):
            return self.schema.load(value)
        raise ValidationError('Must be an object or a list of objects.')


class ModelConfigSchema(Schema):
    class Meta:
        unknown = EXCLUDE

    prior_mode = fields.Str(load_default=ModelConfig.MODE_RESTRICTED,
                            validate=validate.OneOf(ModelConfig.VALID_MODES))
    G = OneOrMany(GaussianSchema(), load_default=dict)
    P0 = OneOrMany(NormalInverseGammaSchema(), load_default=dict)
    omega_prior = fields.Nested(GammaPriorSchema, load_default=dict)
    gamma_prior = fields.Nested(GammaPriorSchema, load_default=dict)
    alpha_prior = fields.Nested(GammaPriorSchema, load_default=dict)
    standardize = fields.Bool(load_default=True)
    tie_gamma = fields.Bool(load_default=False)
    signed_dishes = fields.Bool(load_default=False)
    severity_order = fields.List(fields.Str(), load_default=None, allow_none=True)
    response_order = fields.List(fields.Str(), load_default=None, allow_none=True)
    mcmc = fields.Nested(MCMCOptionsSchema, load_default=dict)
    schema = fields.Nested(DataSchemaSchema, load_default=dict)

    @post_load
    def fill_nested_defaults(self, data: Dict[str, Any], **kwargs) -> Dict[str, Any]:
        # load_default=dict skips nested loading, so apply the nested defaults here
        for key, nested in (('G', GaussianSchema()), ('P0', NormalInverseGammaSchema()),
                            ('omega_prior', GammaPriorSchema()), ('gamma_prior', GammaPriorSchema()),
                            ('alpha_prior', GammaPriorSchema()), ('mcmc', MCMCOptionsSchema()),
                            ('schema', DataSchemaSchema())):
            if data[key] == {}:
                data[key] = nested.load({})
        return data


class CommandSpecSchema(Schema):
    class Meta:
        unknown = EXCLUDE

    subcommand = fields.Str(required=True, validate=validate.OneOf(SUBCOMMANDS))
    config = fields.Str(load_default=None, allow_none=True)
    input = fields.Str(load_default=None, allow_none=True)
    output = fields.Str(load_default=None, allow_none=True)
    out_dir = fields.Str(load_default=None, allow_none=True)
    seed = fields.Int(load_default=None, allow_none=True)
    chains = fields.Int(load_default=1, validate=validate.Range(min=1))
    overrides = fields.Dict(keys=fields.Str(), load_default=dict)


model_config_schema = ModelConfigSchema()
command_spec_schema = CommandSpecSchema()


def read_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Raw settings from a JSON or TOML file; an absent path means defaults."""
    if not path:
        return {}
    with open(path, 'rb') as handle:
        raw = handle.read()
    try:
        if os.path.splitext(path)[1].lower() == '.toml':
            return tomllib.loads(raw.decode('utf-8'))
        return json.loads(raw.decode('utf-8'))
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise ArgumentError(f"Cannot parse config file {path}: {str(e)}")


def merge_overrides(settings: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Apply CLI overrides; keys of the form ``mcmc.iterations`` address nested sections."""
    merged = json.loads(json.dumps(settings))
    for key, value in overrides.items():
        if value is None:
            continue
        target = merged
        *path, leaf = key.split('.')
        for part in path:
            target = target.setdefault(part, {})
        target[leaf] = value
    return merged


def load_settings(path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Validated settings; raises marshmallow's ValidationError on bad values."""
    settings = merge_overrides(read_config_file(path), overrides or {})
    return cast(Dict[str, Any], model_config_schema.load(settings))


def build_model_config(settings: Dict[str, Any]) -> ModelConfig:
    def gaussian(value: Any) -> Any:
        if isinstance(value, list):
            return [GaussianParams(**v) for v in value]
        return GaussianParams(**value)

    def nig(value: Any) -> Any:
        if isinstance(value, list):
            return [NormalInverseGammaParams(**v) for v in value]
        return NormalInverseGammaParams(**value)

    return ModelConfig(
        prior_mode=settings['prior_mode'],
        G=gaussian(settings['G']),
        P0=nig(settings['P0']),
        omega_prior=GammaPrior(**settings['omega_prior']),
        gamma_prior=GammaPrior(**settings['gamma_prior']),
        alpha_prior=GammaPrior(**settings['alpha_prior']),
        standardize=settings['standardize'],
        tie_gamma=settings['tie_gamma'],
    )


def build_mcmc_options(settings: Dict[str, Any], seed: Optional[int] = None) -> MCMCOptions:
    return MCMCOptions(seed=seed, **settings['mcmc'])


def resolve(path: Optional[str], overrides: Optional[Dict[str, Any]] = None,
            seed: Optional[int] = None) -> Tuple[ModelConfig, MCMCOptions, Dict[str, Any]]:
    """Config file plus overrides into (model config, MCMC options, raw validated settings)."""
    settings = load_settings(path, overrides)
    return build_model_config(settings), build_mcmc_options(settings, seed), settings


def load_command_spec(data: Dict[str, Any]) -> Dict[str, Any]:
    spec = cast(Dict[str, Any], command_spec_schema.load(data))
    if spec['subcommand'] in ('simulate', 'fit') and spec['seed'] is None:
        raise ValidationError({'seed': [f"A seed is required for {spec['subcommand']}."]})
    return spec
