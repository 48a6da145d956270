from django.shortcuts import get_object_or_404
from django_filters.rest_framework import DjangoFilterBackend
from rest_framework import filters, generics
from .models import DiagnosticRecord, ExperimentRun
from .serializers import DiagnosticRecordSerializer, ExperimentRunSerializer


# Run history: list & detail, read only
class ExperimentRunListView(generics.ListAPIView):
    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer
    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_fields = ['scenario', 'command', 'status', 'model', 'config_digest']
    search_fields = ['scenario', 'message']
    ordering_fields = ['created_at', 'finished_at', 'scenario']


class ExperimentRunDetailView(generics.RetrieveAPIView):
    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer
    lookup_field = 'uuid'


class DiagnosticRecordListView(generics.ListAPIView):
    serializer_class = DiagnosticRecordSerializer
    filter_backends = [DjangoFilterBackend]
    filterset_fields = ['name', 'passed', 'advisory']

    def get_queryset(self):
        run = get_object_or_404(ExperimentRun, uuid=self.kwargs['uuid'])
        return run.diagnostics.all()
