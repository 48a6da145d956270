from django.urls import path
from .views import DiagnosticRecordListView, ExperimentRunDetailView, ExperimentRunListView

app_name = 'experiments'

urlpatterns = [
    path('', ExperimentRunListView.as_view(), name='run-list'),
    path('<uuid:uuid>/', ExperimentRunDetailView.as_view(), name='run-detail'),
    path('<uuid:uuid>/diagnostics/', DiagnosticRecordListView.as_view(), name='run-diagnostics'),
]
