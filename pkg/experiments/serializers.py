import difflib

from rest_framework import serializers

from brinkman_stepper.services import BRINKMAN
from darcy_stepper.services import DARCY, HELE_SHAW_GAMMA
from field_grid.grids import BOUNDARIES, MIN_CELLS, NEUMANN
from pressure_laws.laws import (
    CLAMPED, ENERGY_NORMALIZATION, INCOMPRESSIBLE, LINEAR, LOG, POWER, PRESSURE_NORMALIZATION, ZERO,
)
from .models import DiagnosticRecord, ExperimentRun
from .registry import CHECK_NAMES, DEFAULT_CHECKS

BUMP = 'bump'
TWO_BUMPS = 'two_bumps'
PLATEAU = 'plateau'
TWO_SPECIES = 'two_species'
SHAPES = (BUMP, TWO_BUMPS, PLATEAU, TWO_SPECIES)

# sections that may be left out of a config file entirely
OPTIONAL_SECTIONS = ('growth', 'datum', 'controls', 'sweep')


class StrictSerializer(serializers.Serializer):
    """Rejects keys it does not declare and names the closest declared key."""

    def to_internal_value(self, data):
        if not isinstance(data, dict):
            return super().to_internal_value(data)
        unknown = sorted(str(key) for key in data if key not in self.fields)
        if not unknown:
            return super().to_internal_value(data)
        errors = {}
        for key in unknown:
            close = difflib.get_close_matches(key, list(self.fields), n=1)
            hint = f" (did you mean '{close[0]}'?)" if close else ''
            errors[key] = [f"unknown key{hint}"]
        known = {key: value for key, value in data.items() if key in self.fields}
        try:
            super().to_internal_value(known)
        except serializers.ValidationError as exc:
            errors.update(exc.detail)
        raise serializers.ValidationError(errors)


def _positive(value, name):
    if not value > 0:
        raise serializers.ValidationError(f"{name} must be positive")
    return value


class GridSerializer(StrictSerializer):
    dim = serializers.ChoiceField(choices=[1, 2], default=1)
    cells = serializers.IntegerField(min_value=MIN_CELLS)
    length = serializers.FloatField(default=6.0)
    boundary = serializers.ChoiceField(choices=BOUNDARIES, default=NEUMANN)

    def validate_length(self, value):
        return _positive(value, 'length')


class LawSerializer(StrictSerializer):
    family = serializers.ChoiceField(choices=[POWER, LOG, INCOMPRESSIBLE], default=POWER)
    gamma = serializers.FloatField(min_value=1.0, required=False, allow_null=True, default=None)
    nu = serializers.FloatField(min_value=0.0)
    normalization = serializers.ChoiceField(choices=[PRESSURE_NORMALIZATION, ENERGY_NORMALIZATION],
                                            default=PRESSURE_NORMALIZATION)
    a0 = serializers.FloatField(required=False, allow_null=True, default=None)

    def validate(self, attrs):
        if attrs['family'] == POWER and attrs['gamma'] is None:
            raise serializers.ValidationError({'gamma': ["a power law needs gamma"]})
        if attrs['family'] == LOG and not attrs['nu'] > 0:
            raise serializers.ValidationError({'nu': ["a log law needs nu > 0"]})
        if attrs['family'] == INCOMPRESSIBLE and attrs['nu'] != 0:
            raise serializers.ValidationError({'nu': ["the incompressible law is a nu = 0 law; set nu: 0"]})
        return attrs


class GrowthSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=[LINEAR, CLAMPED, ZERO], default=LINEAR)
    p_H = serializers.FloatField(default=1.0)
    g0 = serializers.FloatField(default=1.0)

    def validate(self, attrs):
        if attrs['kind'] != ZERO and not (attrs['p_H'] > 0 and attrs['g0'] > 0):
            raise serializers.ValidationError(f"{attrs['kind']} growth needs p_H > 0 and g0 > 0")
        return attrs


class DatumSerializer(StrictSerializer):
    shape = serializers.ChoiceField(choices=SHAPES, default=BUMP)
    height = serializers.FloatField(min_value=0.0, default=0.5)
    width = serializers.FloatField(default=0.8)
    center = serializers.FloatField(default=0.0)
    separation = serializers.FloatField(min_value=0.0, default=1.0)
    bound = serializers.FloatField(min_value=0.0, default=1.0)
    # growth rate of the second species; defaults to the shared g0
    species_g0 = serializers.FloatField(required=False, allow_null=True, default=None)

    def validate_width(self, value):
        return _positive(value, 'width')


class ControlsSerializer(StrictSerializer):
    cfl_fraction = serializers.FloatField(default=0.5)
    max_dt = serializers.FloatField(default=1e-2)
    reaction_fraction = serializers.FloatField(default=0.5)
    record_stride = serializers.IntegerField(min_value=1, default=1)


class SweepSerializer(StrictSerializer):
    nu = serializers.ListField(child=serializers.FloatField(min_value=0.0), default=list)
    gamma = serializers.ListField(child=serializers.FloatField(min_value=1.0), default=list)
    joint_nu = serializers.ListField(child=serializers.FloatField(min_value=0.0), default=list)
    # gamma of the nu arm and nu of the gamma arm; default to the law's values
    gamma_fixed = serializers.FloatField(min_value=1.0, required=False, allow_null=True, default=None)
    nu_fixed = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    reference_gamma = serializers.FloatField(min_value=HELE_SHAW_GAMMA, default=80.0)
    reference_refinement = serializers.IntegerField(min_value=1, default=1)

    def validate_joint_nu(self, value):
        if any(nu <= 0 for nu in value):
            raise serializers.ValidationError("joint-limit viscosities must be positive")
        return value


class ExperimentConfigSerializer(StrictSerializer):
    scenario = serializers.RegexField(r'^[A-Za-z0-9_.-]+$', max_length=100)
    model = serializers.ChoiceField(choices=[BRINKMAN, DARCY], default=BRINKMAN)
    grid = GridSerializer()
    law = LawSerializer()
    growth = GrowthSerializer()
    datum = DatumSerializer()
    horizon = serializers.FloatField()
    observer_times = serializers.ListField(child=serializers.FloatField(min_value=0.0), default=list)
    controls = ControlsSerializer()
    diagnostics = serializers.ListField(child=serializers.ChoiceField(choices=CHECK_NAMES),
                                        default=lambda: list(DEFAULT_CHECKS))
    sweep = SweepSerializer()
    output_dir = serializers.CharField(default='', allow_blank=True)

    def to_internal_value(self, data):
        if isinstance(data, dict):
            data = dict(data)
            for section in OPTIONAL_SECTIONS:
                if data.get(section) is None:
                    data[section] = {}
        return super().to_internal_value(data)

    def validate_horizon(self, value):
        return _positive(value, 'horizon')

    def validate(self, attrs):
        late = [t for t in attrs['observer_times'] if t > attrs['horizon']]
        if late:
            raise serializers.ValidationError({'observer_times': [f"times {late} lie after the horizon"]})
        if attrs['law']['family'] == INCOMPRESSIBLE and attrs['model'] != DARCY:
            raise serializers.ValidationError({'law': {'family': [
                "the incompressible law has a multivalued pressure and cannot drive the brinkman stepper; "
                "use model: darcy (run through the large-gamma proxy) or a power law"]}})
        return attrs


# run history (read only API)

class DiagnosticRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = DiagnosticRecord
        fields = ['id', 'name', 'passed', 'advisory', 'residual', 'normalized_residual', 'terms', 'checks',
                  'created_at']
        read_only_fields = fields


class ExperimentRunSerializer(serializers.ModelSerializer):
    diagnostics_count = serializers.IntegerField(source='diagnostics.count', read_only=True)

    class Meta:
        model = ExperimentRun
        fields = ['uuid', 'scenario', 'command', 'model', 'status', 'config', 'config_digest', 'output_dir',
                  'message', 'diagnostics_count', 'created_at', 'finished_at']
        read_only_fields = fields
