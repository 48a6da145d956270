from django.contrib import admin
from .models import DiagnosticRecord, ExperimentRun


class DiagnosticRecordInline(admin.TabularInline):
    model = DiagnosticRecord
    extra = 0
    fields = ('name', 'passed', 'advisory', 'residual', 'normalized_residual')
    readonly_fields = fields
    can_delete = False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('scenario', 'command', 'model', 'status', 'created_at', 'finished_at')
    list_filter = ('status', 'command', 'model')
    search_fields = ('scenario', 'config_digest', 'uuid')
    readonly_fields = ('uuid', 'config', 'config_digest', 'output_dir', 'created_at', 'finished_at')
    inlines = [DiagnosticRecordInline]

    fieldsets = (
        ('Run', {
            'fields': ('uuid', 'scenario', 'command', 'model', 'status', 'message')
        }),
        ('Config', {
            'fields': ('config_digest', 'config', 'output_dir')
        }),
        ('Timing', {
            'fields': ('created_at', 'finished_at')
        }),
    )


@admin.register(DiagnosticRecord)
class DiagnosticRecordAdmin(admin.ModelAdmin):
    list_display = ('name', 'run', 'passed', 'advisory', 'normalized_residual')
    list_filter = ('passed', 'advisory', 'name')
    search_fields = ('name', 'run__scenario')
